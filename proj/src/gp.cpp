#include "clothscope/gp.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "clothscope/rng.hpp"

namespace clothscope::bo {

namespace {

constexpr double kSqrt5 = 2.23606797749978969641;
constexpr std::array<double, 4> kJitter{1e-6, 1e-5, 1e-4, 1e-3};

Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& X, const GpHyper& h) {
  const Eigen::Index n = X.rows();
  Eigen::MatrixXd K(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    K(i, i) = h.signal_var;
    for (Eigen::Index j = 0; j < i; ++j)
      K(i, j) = K(j, i) = matern52((X.row(i) - X.row(j)).norm(), h.lengthscale, h.signal_var);
  }
  return K;
}

// Cholesky of K + noise I, growing the jitter on failure.
bool factorize(const Eigen::MatrixXd& K, double noise, Eigen::MatrixXd& L, double& jitter) {
  Eigen::MatrixXd A = K;
  A.diagonal().array() += noise;
  Eigen::LLT<Eigen::MatrixXd> llt(A);
  if (llt.info() == Eigen::Success) {
    L = llt.matrixL();
    jitter = 0.0;
    return true;
  }
  for (double j : kJitter) {
    Eigen::MatrixXd B = A;
    B.diagonal().array() += j;
    llt.compute(B);
    if (llt.info() == Eigen::Success) {
      L = llt.matrixL();
      jitter = j;
      return true;
    }
  }
  return false;
}

struct Dedup {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
};

Dedup merge_duplicates(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  std::vector<Eigen::Index> rep(X.rows(), -1);
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (Eigen::Index k : keep)
      if ((X.row(i) - X.row(k)).norm() < 1e-12) {
        rep[i] = k;
        break;
      }
    if (rep[i] < 0) {
      rep[i] = i;
      keep.push_back(i);
    }
  }
  Dedup d;
  d.X.resize(static_cast<Eigen::Index>(keep.size()), X.cols());
  d.y.setZero(static_cast<Eigen::Index>(keep.size()));
  Eigen::VectorXd count = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) d.X.row(static_cast<Eigen::Index>(k)) = X.row(keep[k]);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const auto k = static_cast<Eigen::Index>(std::find(keep.begin(), keep.end(), rep[i]) - keep.begin());
    d.y[k] += y[i];
    count[k] += 1.0;
  }
  d.y.array() /= count.array();
  return d;
}

void standardize_targets(const Eigen::VectorXd& y, double& mean, double& scale) {
  mean = y.mean();
  const double var = (y.array() - mean).square().mean();
  scale = var > 1e-300 ? std::sqrt(var) : 1.0;
}

// Plain Nelder-Mead on a 3-vector; the objective handles bounds.
template <class F>
std::pair<Eigen::Vector3d, double> nelder_mead(const F& f, const Eigen::Vector3d& x0,
                                               const Eigen::Vector3d& step, int max_evals) {
  std::array<Eigen::Vector3d, 4> s;
  std::array<double, 4> v;
  s[0] = x0;
  for (int i = 0; i < 3; ++i) {
    s[i + 1] = x0;
    s[i + 1][i] += step[i];
  }
  int evals = 0;
  for (int i = 0; i < 4; ++i, ++evals) v[i] = f(s[i]);

  while (evals < max_evals) {
    std::array<int, 4> idx{0, 1, 2, 3};
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return v[a] < v[b]; });
    std::array<Eigen::Vector3d, 4> ss;
    std::array<double, 4> vv;
    for (int i = 0; i < 4; ++i) {
      ss[i] = s[idx[i]];
      vv[i] = v[idx[i]];
    }
    s = ss;
    v = vv;
    if (std::abs(v[3] - v[0]) < 1e-10 * (1.0 + std::abs(v[0])) &&
        (s[3] - s[0]).norm() < 1e-8)
      break;

    const Eigen::Vector3d c = (s[0] + s[1] + s[2]) / 3.0;
    const Eigen::Vector3d xr = c + (c - s[3]);
    const double fr = f(xr);
    ++evals;
    if (fr < v[0]) {
      const Eigen::Vector3d xe = c + 2.0 * (c - s[3]);
      const double fe = f(xe);
      ++evals;
      if (fe < fr) {
        s[3] = xe;
        v[3] = fe;
      } else {
        s[3] = xr;
        v[3] = fr;
      }
    } else if (fr < v[2]) {
      s[3] = xr;
      v[3] = fr;
    } else {
      const bool outside = fr < v[3];
      const Eigen::Vector3d xc = outside ? Eigen::Vector3d(c + 0.5 * (xr - c))
                                         : Eigen::Vector3d(c + 0.5 * (s[3] - c));
      const double fc = f(xc);
      ++evals;
      if (fc < (outside ? fr : v[3])) {
        s[3] = xc;
        v[3] = fc;
      } else {
        for (int i = 1; i < 4; ++i) {
          s[i] = s[0] + 0.5 * (s[i] - s[0]);
          v[i] = f(s[i]);
          ++evals;
        }
      }
    }
  }
  int best = 0;
  for (int i = 1; i < 4; ++i)
    if (v[i] < v[best]) best = i;
  return {s[best], v[best]};
}

}  // namespace

double matern52(double r, double lengthscale, double signal_var) {
  const double a = kSqrt5 * r / lengthscale;
  return signal_var * (1.0 + a + a * a / 3.0) * std::exp(-a);
}

double matern52(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double lengthscale,
                double signal_var) {
  return matern52((a - b).norm(), lengthscale, signal_var);
}

double GPState::best_observed() const { return y.minCoeff() * y_scale + y_mean; }

Eigen::Index GPState::best_index() const {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < y.size(); ++i)
    if (y[i] < y[best]) best = i;
  return best;
}

double log_marginal_likelihood(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const GpHyper& h) {
  Eigen::MatrixXd L;
  double jitter = 0.0;
  if (!factorize(kernel_matrix(X, h), h.noise_var, L, jitter))
    return -std::numeric_limits<double>::infinity();
  const Eigen::VectorXd a = L.triangularView<Eigen::Lower>().solve(y);
  return -0.5 * a.squaredNorm() - L.diagonal().array().log().sum() -
         0.5 * static_cast<double>(y.size()) * std::log(2.0 * std::numbers::pi);
}

GPState gp_condition(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const GpHyper& hyper) {
  if (X.rows() < 1 || X.rows() != y.size()) throw std::invalid_argument("GP needs one target per input row");
  if (!(hyper.lengthscale > 0.0) || !(hyper.signal_var > 0.0) || hyper.noise_var < 0.0)
    throw std::invalid_argument("GP hyperparameters must be positive");
  const Dedup d = merge_duplicates(X, y);
  GPState s;
  s.X = d.X;
  standardize_targets(d.y, s.y_mean, s.y_scale);
  s.y = (d.y.array() - s.y_mean) / s.y_scale;
  s.hyper = hyper;
  const Eigen::MatrixXd K = kernel_matrix(s.X, hyper);
  if (!factorize(K, hyper.noise_var, s.L, s.jitter)) {
    std::ostringstream msg;
    msg << "kernel matrix not positive definite with jitter up to " << kJitter.back() << " (n=" << s.X.rows()
        << ", lengthscale=" << hyper.lengthscale << ", signal_var=" << hyper.signal_var
        << ", noise_var=" << hyper.noise_var << ")";
    throw GpNumericalError(msg.str());
  }
  s.alpha = s.L.transpose().triangularView<Eigen::Upper>().solve(
      s.L.triangularView<Eigen::Lower>().solve(s.y));
  s.log_marginal_likelihood = -0.5 * s.y.dot(s.alpha) - s.L.diagonal().array().log().sum() -
                              0.5 * static_cast<double>(s.y.size()) * std::log(2.0 * std::numbers::pi);
  return s;
}

GPState gp_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const GpFitOptions& o) {
  if (X.rows() < 2) throw std::invalid_argument("gp_fit needs at least two observations");
  const Dedup d = merge_duplicates(X, y);
  double mean = 0.0, scale = 1.0;
  standardize_targets(d.y, mean, scale);
  const Eigen::VectorXd ys = (d.y.array() - mean) / scale;

  const Eigen::Vector3d lo(std::log(o.lengthscale_min), std::log(o.signal_min),
                           std::log(o.fixed_noise ? *o.fixed_noise : o.noise_min));
  const Eigen::Vector3d hi(std::log(o.lengthscale_max), std::log(o.signal_max),
                           std::log(o.fixed_noise ? *o.fixed_noise : o.noise_max));
  auto to_hyper = [&](const Eigen::Vector3d& z) {
    const Eigen::Vector3d c = z.cwiseMax(lo).cwiseMin(hi);
    return GpHyper{std::exp(c[0]), std::exp(c[1]), std::exp(c[2])};
  };
  auto objective = [&](const Eigen::Vector3d& z) {
    // Quadratic wall outside the box keeps the simplex inside.
    const double excess = (z - z.cwiseMax(lo).cwiseMin(hi)).squaredNorm();
    const double lml = log_marginal_likelihood(d.X, ys, to_hyper(z));
    return std::isfinite(lml) ? -lml + 1e3 * excess : std::numeric_limits<double>::max();
  };

  Rng rng(derive_seed({o.seed, static_cast<std::uint64_t>(d.X.rows()), 0x6F11}));
  Eigen::Vector3d best_z = 0.5 * (lo + hi);
  double best = std::numeric_limits<double>::infinity();
  for (int s = 0; s < std::max(1, o.starts); ++s) {
    Eigen::Vector3d z0;
    if (s == 0) {
      z0 = Eigen::Vector3d(std::log(0.5), 0.0, std::log(1e-4)).cwiseMax(lo).cwiseMin(hi);
    } else {
      for (int k = 0; k < 3; ++k) z0[k] = rng.uniform(lo[k], hi[k]);
    }
    const Eigen::Vector3d step = (0.15 * (hi - lo)).cwiseMax(Eigen::Vector3d::Constant(1e-3));
    const auto [z, v] = nelder_mead(objective, z0, step, o.max_evaluations);
    if (v < best) {
      best = v;
      best_z = z;
    }
  }
  if (!std::isfinite(best) || best == std::numeric_limits<double>::max())
    throw GpNumericalError("no hyperparameter setting gives a factorisable kernel matrix");
  return gp_condition(d.X, d.y, to_hyper(best_z));
}

Prediction gp_predict_standardized(const GPState& s, const Eigen::VectorXd& x) {
  const Eigen::Index n = s.X.rows();
  Eigen::VectorXd k(n);
  for (Eigen::Index i = 0; i < n; ++i)
    k[i] = matern52((s.X.row(i).transpose() - x).norm(), s.hyper.lengthscale, s.hyper.signal_var);
  const Eigen::VectorXd v = s.L.triangularView<Eigen::Lower>().solve(k);
  Prediction p;
  p.mean = k.dot(s.alpha);
  p.variance = s.hyper.signal_var - v.squaredNorm();
  if (p.variance < 0.0) p.variance = 0.0;
  return p;
}

Prediction gp_predict(const GPState& s, const Eigen::VectorXd& x) {
  Prediction p = gp_predict_standardized(s, x);
  p.mean = p.mean * s.y_scale + s.y_mean;
  p.variance *= s.y_scale * s.y_scale;
  return p;
}

double expected_improvement(double mean, double sigma, double f_best, double xi) {
  const double imp = f_best - mean - xi;
  if (sigma < 1e-12) return std::max(0.0, imp);
  const double z = imp / sigma;
  const double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  return std::max(0.0, imp * cdf + sigma * pdf);
}

double expected_improvement(const GPState& s, const Eigen::VectorXd& x, double xi) {
  const Prediction p = gp_predict_standardized(s, x);
  return expected_improvement(p.mean, std::sqrt(p.variance), s.y.minCoeff(), xi);
}

}  // namespace clothscope::bo
