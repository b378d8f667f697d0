#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>

#include <Eigen/Dense>

namespace clothscope::bo {

/// sf2 (1 + sqrt5 r / l + 5 r^2 / (3 l^2)) exp(-sqrt5 r / l)
double matern52(double r, double lengthscale, double signal_var);
double matern52(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double lengthscale,
                double signal_var);

struct GpHyper {
  double lengthscale = 0.5;
  double signal_var = 1.0;
  double noise_var = 1e-6;
};

struct GpFitOptions {
  int starts = 8;
  int max_evaluations = 300;  // per start
  double lengthscale_min = 1e-2, lengthscale_max = 10.0;
  double noise_min = 1e-8, noise_max = 1.0;
  double signal_min = 1e-2, signal_max = 1e2;
  std::optional<double> fixed_noise;  // pins sigma_n^2
  std::uint64_t seed = 0;
};

struct GPState {
  Eigen::MatrixXd X;   // n x d inputs
  Eigen::VectorXd y;   // standardised targets
  double y_mean = 0.0;
  double y_scale = 1.0;
  GpHyper hyper;
  double jitter = 0.0;  // added to the diagonal on top of noise_var
  Eigen::MatrixXd L;    // lower Cholesky factor of K + (noise + jitter) I
  Eigen::VectorXd alpha;
  double log_marginal_likelihood = 0.0;

  std::size_t size() const { return static_cast<std::size_t>(X.rows()); }
  /// Best observed value in original units.
  double best_observed() const;
  Eigen::Index best_index() const;
};

struct GpNumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Log marginal likelihood of standardised targets; -inf when the kernel
/// matrix cannot be factorised even with the largest jitter.
double log_marginal_likelihood(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const GpHyper& h);

/// Conditions on (X, y) with fixed hyperparameters. Rows closer than 1e-12
/// are merged and their targets averaged.
GPState gp_condition(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const GpHyper& hyper);

/// Maximises the log marginal likelihood over (log l, log sf2, log sn2) by
/// bounded multi-start Nelder-Mead, then conditions.
GPState gp_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const GpFitOptions& options = {});

struct Prediction {
  double mean = 0.0;      // original units
  double variance = 0.0;  // original units, >= 0
};

Prediction gp_predict(const GPState& state, const Eigen::VectorXd& x);
/// Same in standardised units.
Prediction gp_predict_standardized(const GPState& state, const Eigen::VectorXd& x);

inline constexpr double kDefaultXi = 0.01;

/// Minimisation form: improvement is f_best - f - xi.
double expected_improvement(double mean, double sigma, double f_best, double xi = kDefaultXi);
/// EI of the posterior at x, evaluated in standardised units against the
/// best observation.
double expected_improvement(const GPState& state, const Eigen::VectorXd& x, double xi = kDefaultXi);

}  // namespace clothscope::bo
