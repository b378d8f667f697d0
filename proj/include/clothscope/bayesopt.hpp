#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "clothscope/gp.hpp"
#include "clothscope/rng.hpp"

namespace clothscope::bo {

/// Points of the Halton sequence (first `dim` primes as bases), indices
/// start..start+n-1, each coordinate in [0, 1).
Eigen::MatrixXd halton(int n, int dim, int start = 1);

/// n Latin-hypercube points in [-1, 1]^dim.
Eigen::MatrixXd latin_hypercube(int n, int dim, Rng& rng);

/// Centre of the cube followed by `lhs_points` Latin-hypercube points.
Eigen::MatrixXd initial_design(int dim, Rng& rng, int lhs_points = 4);

struct ProposeOptions {
  int global_candidates = 2048;
  int local_candidates = 256;
  double local_sigma = 0.1;
  double xi = kDefaultXi;
};

/// Index of the largest acquisition value; the lowest index wins ties.
Eigen::Index argmax_lowest(const std::vector<double>& values);

/// Candidate set: randomly shifted Halton points mapped onto [-1, 1]^d,
/// then Gaussian perturbations of the incumbent clamped to the cube.
Eigen::MatrixXd candidate_set(const GPState& state, Rng& rng, const ProposeOptions& options = {});

/// Maximiser of expected improvement over the candidate set.
Eigen::VectorXd propose(const GPState& state, Rng& rng, const ProposeOptions& options = {});

struct Evaluation {
  int iteration = 0;  // 0-based
  Eigen::VectorXd x;  // normalised point
  double value = 0.0;
  double best = 0.0;  // best value up to and including this evaluation
  bool failed = false;
  double wall_s = 0.0;
};

struct MinimizeOptions {
  int budget = 25;  // total evaluations, never fewer than the initial design
  int lhs_points = 4;
  std::uint64_t seed = 0;
  GpFitOptions gp;
  ProposeOptions propose;
};

struct MinimizeResult {
  std::vector<Evaluation> history;
  int best_index = 0;
};

/// Objective failures are signalled by throwing; such points are recorded
/// with twice the worst finite value observed so far (1 if none).
using Objective = std::function<double(const Eigen::VectorXd&)>;
using EvaluationCallback = std::function<void(const Evaluation&)>;

/// Sequential GP/EI minimisation over [-1, 1]^dim.
MinimizeResult minimize(const Objective& f, int dim, const MinimizeOptions& options,
                        const EvaluationCallback& on_evaluation = {});

}  // namespace clothscope::bo
