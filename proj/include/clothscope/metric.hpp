#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "clothscope/rng.hpp"

namespace clothscope::embed {

using Embedding = std::vector<double>;

/// Squared Euclidean distance.
double pairwise_distance(std::span<const double> a, std::span<const double> b);

using Pair = std::pair<int, int>;

struct PairSet {
  std::vector<Pair> positives;
  std::vector<Pair> negatives;
};

/// Every unordered pair (i < j), positive iff the labels match.
PairSet batchall_pairs(std::span<const int> labels);

/// mean_{positives} d^2 + mean_{negatives} max(0, margin - d)^2 with d the
/// Euclidean distance. When `grad` is non-null it receives dL/de per item.
double contrastive_loss(const std::vector<Embedding>& embeddings, std::span<const int> labels,
                        double margin, std::vector<Embedding>* grad = nullptr);

struct Triplet {
  int anchor = 0;
  int positive = 0;
  int negative = 0;
};

/// All (a, p, n) with label[a] == label[p], a != p, label[n] != label[a].
std::vector<Triplet> all_triplets(std::span<const int> labels);
/// `count` triplets drawn uniformly from all_triplets (with replacement).
std::vector<Triplet> sample_triplets(std::span<const int> labels, std::size_t count, Rng& rng);

/// Fraction with d^2(a, p) < d^2(a, n); ties fail.
double triplet_accuracy(const std::vector<Embedding>& embeddings,
                        const std::vector<Triplet>& triplets);

struct RegressionResult {
  std::vector<double> predictions;
  std::vector<double> targets;
  double rmse = 0.0;
  double acc_at_half = 0.0;  // fraction with |prediction - target| <= 0.5
  double ridge = 0.0;        // penalty actually used
};

RegressionResult score_predictions(std::vector<double> predictions, std::vector<double> targets);

/// Affine least squares with an unpenalised intercept.
struct RidgeModel {
  Eigen::VectorXd weights;
  double intercept = 0.0;
  double predict(const Eigen::VectorXd& x) const { return weights.dot(x) + intercept; }
};

RidgeModel ridge_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double ridge);

/// Leave-one-out mean squared error of ridge_fit, via the hat-matrix shortcut.
double ridge_loo_mse(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double ridge);

/// Mode A: ridge on raw embeddings, fit on the train rows and scored on the
/// test rows. A negative `ridge` selects the penalty from a log grid by
/// leave-one-out error on the training rows.
RegressionResult regress_ridge(const Eigen::MatrixXd& train_x, const Eigen::VectorXd& train_y,
                               const Eigen::MatrixXd& test_x, const Eigen::VectorXd& test_y,
                               double ridge = 1e-6);

struct Pca {
  Eigen::VectorXd mean;
  Eigen::MatrixXd components;   // k x D, orthonormal rows, descending variance
  Eigen::VectorXd eigenvalues;  // all D covariance eigenvalues, descending
  Eigen::MatrixXd project(const Eigen::MatrixXd& X) const;
};

/// Covariance uses the 1/n normalisation.
Pca fit_pca(const Eigen::MatrixXd& X, int components);

/// Mode B: PCA to min(50, n - 1) components, then leave-one-out regression.
RegressionResult regress_pca_loo(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                 int max_components = 50, double ridge = 1e-6);

Eigen::MatrixXd to_matrix(const std::vector<Embedding>& rows);

}  // namespace clothscope::embed
