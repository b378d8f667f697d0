#include "clothscope/metric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace clothscope::embed {

double pairwise_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw std::invalid_argument("embedding lengths differ (" + std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()) + ")");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

PairSet batchall_pairs(std::span<const int> labels) {
  if (labels.size() < 2) throw std::invalid_argument("a batch needs at least two items");
  PairSet out;
  const int n = static_cast<int>(labels.size());
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      (labels[i] == labels[j] ? out.positives : out.negatives).emplace_back(i, j);
  return out;
}

double contrastive_loss(const std::vector<Embedding>& e, std::span<const int> labels, double margin,
                        std::vector<Embedding>* grad) {
  if (e.size() != labels.size()) throw std::invalid_argument("one label per embedding required");
  if (!(margin > 0.0)) throw std::invalid_argument("margin must be positive");
  const PairSet pairs = batchall_pairs(labels);
  if (pairs.positives.empty() || pairs.negatives.empty())
    throw std::invalid_argument("batch needs at least one positive and one negative pair");

  const std::size_t dim = e.front().size();
  if (grad) grad->assign(e.size(), Embedding(dim, 0.0));
  const double wp = 1.0 / static_cast<double>(pairs.positives.size());
  const double wn = 1.0 / static_cast<double>(pairs.negatives.size());

  double pos = 0.0, neg = 0.0;
  for (const auto& [i, j] : pairs.positives) {
    pos += pairwise_distance(e[i], e[j]);
    if (grad)
      for (std::size_t k = 0; k < dim; ++k) {
        const double g = 2.0 * wp * (e[i][k] - e[j][k]);
        (*grad)[i][k] += g;
        (*grad)[j][k] -= g;
      }
  }
  for (const auto& [i, j] : pairs.negatives) {
    const double d = std::sqrt(pairwise_distance(e[i], e[j]));
    const double h = margin - d;
    if (h <= 0.0) continue;
    neg += h * h;
    if (grad && d > 0.0)
      for (std::size_t k = 0; k < dim; ++k) {
        const double g = -2.0 * wn * h * (e[i][k] - e[j][k]) / d;
        (*grad)[i][k] += g;
        (*grad)[j][k] -= g;
      }
  }
  return pos * wp + neg * wn;
}

std::vector<Triplet> all_triplets(std::span<const int> labels) {
  std::vector<Triplet> out;
  const int n = static_cast<int>(labels.size());
  for (int a = 0; a < n; ++a)
    for (int p = 0; p < n; ++p) {
      if (p == a || labels[p] != labels[a]) continue;
      for (int q = 0; q < n; ++q)
        if (labels[q] != labels[a]) out.push_back({a, p, q});
    }
  return out;
}

std::vector<Triplet> sample_triplets(std::span<const int> labels, std::size_t count, Rng& rng) {
  const std::vector<Triplet> all = all_triplets(labels);
  if (all.empty()) throw std::invalid_argument("labels admit no triplet");
  std::vector<Triplet> out(count);
  for (auto& t : out) t = all[rng.below(all.size())];
  return out;
}

double triplet_accuracy(const std::vector<Embedding>& e, const std::vector<Triplet>& triplets) {
  if (triplets.empty()) throw std::invalid_argument("no triplets to score");
  std::size_t correct = 0;
  for (const Triplet& t : triplets)
    if (pairwise_distance(e[t.anchor], e[t.positive]) < pairwise_distance(e[t.anchor], e[t.negative]))
      ++correct;
  return static_cast<double>(correct) / static_cast<double>(triplets.size());
}

RegressionResult score_predictions(std::vector<double> predictions, std::vector<double> targets) {
  if (predictions.size() != targets.size() || predictions.empty())
    throw std::invalid_argument("predictions and targets must be non-empty and equally long");
  RegressionResult r;
  double se = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double d = predictions[i] - targets[i];
    se += d * d;
    if (std::abs(d) <= 0.5) ++hits;
  }
  r.rmse = std::sqrt(se / static_cast<double>(predictions.size()));
  r.acc_at_half = static_cast<double>(hits) / static_cast<double>(predictions.size());
  r.predictions = std::move(predictions);
  r.targets = std::move(targets);
  return r;
}

RidgeModel ridge_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double ridge) {
  if (X.rows() != y.size() || X.rows() < 1)
    throw std::invalid_argument("ridge_fit needs one target per row");
  if (ridge < 0.0) throw std::invalid_argument("ridge penalty must be non-negative");
  const Eigen::RowVectorXd mx = X.colwise().mean();
  const double my = y.mean();
  const Eigen::MatrixXd Xc = X.rowwise() - mx;
  Eigen::MatrixXd A = Xc.transpose() * Xc;
  A.diagonal().array() += ridge;
  RidgeModel m;
  m.weights = A.ldlt().solve(Xc.transpose() * (y.array() - my).matrix());
  m.intercept = my - mx.dot(m.weights);
  return m;
}

double ridge_loo_mse(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double ridge) {
  const Eigen::Index n = X.rows();
  if (n < 3) throw std::invalid_argument("leave-one-out needs at least 3 rows");
  // Augment with a constant column; its penalty is zero.
  Eigen::MatrixXd Xa(n, X.cols() + 1);
  Xa << X, Eigen::VectorXd::Ones(n);
  Eigen::MatrixXd A = Xa.transpose() * Xa;
  A.diagonal().head(X.cols()).array() += ridge;
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
  const Eigen::MatrixXd S = ldlt.solve(Xa.transpose());  // (D + 1) x n
  const Eigen::VectorXd fit = Xa * (S * y);
  double mse = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double h = Xa.row(i).dot(S.col(i));
    const double r = (y[i] - fit[i]) / std::max(1.0 - h, 1e-12);
    mse += r * r;
  }
  return mse / static_cast<double>(n);
}

RegressionResult regress_ridge(const Eigen::MatrixXd& train_x, const Eigen::VectorXd& train_y,
                               const Eigen::MatrixXd& test_x, const Eigen::VectorXd& test_y,
                               double ridge) {
  if (train_x.cols() != test_x.cols()) throw std::invalid_argument("train/test widths differ");
  if (train_x.rows() < 2 || test_x.rows() < 1)
    throw std::invalid_argument("regression needs >= 2 training and >= 1 test samples");
  if (ridge < 0.0) {
    double best = std::numeric_limits<double>::infinity();
    for (int e = -6; e <= 3; ++e) {
      const double lambda = std::pow(10.0, e);
      const double mse = ridge_loo_mse(train_x, train_y, lambda);
      if (mse < best) {
        best = mse;
        ridge = lambda;
      }
    }
  }
  const RidgeModel m = ridge_fit(train_x, train_y, ridge);
  std::vector<double> pred(test_x.rows()), tgt(test_x.rows());
  for (Eigen::Index i = 0; i < test_x.rows(); ++i) {
    pred[i] = m.predict(test_x.row(i).transpose());
    tgt[i] = test_y[i];
  }
  RegressionResult r = score_predictions(std::move(pred), std::move(tgt));
  r.ridge = ridge;
  return r;
}

Eigen::MatrixXd Pca::project(const Eigen::MatrixXd& X) const {
  return (X.rowwise() - mean.transpose()) * components.transpose();
}

Pca fit_pca(const Eigen::MatrixXd& X, int components) {
  if (X.rows() < 2) throw std::invalid_argument("PCA needs at least two rows");
  if (components < 1 || components > X.cols())
    throw std::invalid_argument("PCA component count out of range");
  Pca p;
  p.mean = X.colwise().mean().transpose();
  const Eigen::MatrixXd Xc = X.rowwise() - p.mean.transpose();
  const Eigen::MatrixXd cov = Xc.transpose() * Xc / static_cast<double>(X.rows());
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  if (es.info() != Eigen::Success) throw std::runtime_error("PCA eigen-decomposition failed");
  const Eigen::Index d = X.cols();
  p.eigenvalues = es.eigenvalues().reverse();
  p.components.resize(components, d);
  for (int k = 0; k < components; ++k) p.components.row(k) = es.eigenvectors().col(d - 1 - k).transpose();
  return p;
}

RegressionResult regress_pca_loo(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                 int max_components, double ridge) {
  const Eigen::Index n = X.rows();
  if (n < 3 || y.size() != n) throw std::invalid_argument("PCA regression needs >= 3 samples");
  const int k = static_cast<int>(std::min<Eigen::Index>({max_components, n - 1, X.cols()}));
  const Eigen::MatrixXd Z = fit_pca(X, k).project(X);
  std::vector<double> pred(n), tgt(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::MatrixXd Zt(n - 1, k);
    Eigen::VectorXd yt(n - 1);
    for (Eigen::Index r = 0, o = 0; r < n; ++r) {
      if (r == i) continue;
      Zt.row(o) = Z.row(r);
      yt[o++] = y[r];
    }
    pred[i] = ridge_fit(Zt, yt, ridge).predict(Z.row(i).transpose());
    tgt[i] = y[i];
  }
  RegressionResult r = score_predictions(std::move(pred), std::move(tgt));
  r.ridge = ridge;
  return r;
}

Eigen::MatrixXd to_matrix(const std::vector<Embedding>& rows) {
  if (rows.empty()) return {};
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size()) throw std::invalid_argument("ragged embedding matrix");
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  return m;
}

}  // namespace clothscope::embed
