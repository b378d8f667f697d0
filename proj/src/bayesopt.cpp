#include "clothscope/bayesopt.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace clothscope::bo {

namespace {

constexpr std::array<int, 32> kPrimes{2,  3,  5,  7,  11, 13, 17, 19, 23, 29,  31,  37,  41,  43,  47,  53,
                                      59, 61, 67, 71, 73, 79, 83, 89, 97, 101, 103, 107, 109, 113, 127, 131};

double radical_inverse(std::uint64_t i, int base) {
  double inv = 1.0 / base, f = inv, r = 0.0;
  while (i > 0) {
    r += f * static_cast<double>(i % static_cast<std::uint64_t>(base));
    i /= static_cast<std::uint64_t>(base);
    f *= inv;
  }
  return r;
}

}  // namespace

Eigen::MatrixXd halton(int n, int dim, int start) {
  if (dim < 1 || dim > static_cast<int>(kPrimes.size()))
    throw std::invalid_argument("Halton dimension must be in [1, " + std::to_string(kPrimes.size()) + "]");
  Eigen::MatrixXd h(n, dim);
  for (int i = 0; i < n; ++i)
    for (int d = 0; d < dim; ++d) h(i, d) = radical_inverse(static_cast<std::uint64_t>(start + i), kPrimes[d]);
  return h;
}

Eigen::MatrixXd latin_hypercube(int n, int dim, Rng& rng) {
  Eigen::MatrixXd x(n, dim);
  std::vector<int> perm(n);
  for (int d = 0; d < dim; ++d) {
    for (int i = 0; i < n; ++i) perm[i] = i;
    for (int i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(static_cast<std::uint64_t>(i))]);
    for (int i = 0; i < n; ++i) x(i, d) = -1.0 + 2.0 * (perm[i] + rng.uniform()) / n;
  }
  return x;
}

Eigen::MatrixXd initial_design(int dim, Rng& rng, int lhs_points) {
  Eigen::MatrixXd x(lhs_points + 1, dim);
  x.row(0).setZero();
  if (lhs_points > 0) x.bottomRows(lhs_points) = latin_hypercube(lhs_points, dim, rng);
  return x;
}

Eigen::Index argmax_lowest(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("no acquisition values");
  Eigen::Index best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[static_cast<std::size_t>(best)]) best = static_cast<Eigen::Index>(i);
  return best;
}

Eigen::MatrixXd candidate_set(const GPState& state, Rng& rng, const ProposeOptions& o) {
  const int dim = static_cast<int>(state.X.cols());
  Eigen::MatrixXd c(o.global_candidates + o.local_candidates, dim);
  Eigen::RowVectorXd shift(dim);
  for (int d = 0; d < dim; ++d) shift[d] = rng.uniform();
  const Eigen::MatrixXd h = halton(o.global_candidates, dim);
  for (int i = 0; i < o.global_candidates; ++i)
    for (int d = 0; d < dim; ++d) {
      double u = h(i, d) + shift[d];
      u -= std::floor(u);
      c(i, d) = -1.0 + 2.0 * u;
    }
  const Eigen::RowVectorXd incumbent = state.X.row(state.best_index());
  for (int i = 0; i < o.local_candidates; ++i)
    for (int d = 0; d < dim; ++d)
      c(o.global_candidates + i, d) = std::clamp(incumbent[d] + o.local_sigma * rng.normal(), -1.0, 1.0);
  return c;
}

Eigen::VectorXd propose(const GPState& state, Rng& rng, const ProposeOptions& o) {
  const Eigen::MatrixXd c = candidate_set(state, rng, o);
  std::vector<double> ei(static_cast<std::size_t>(c.rows()));
  for (Eigen::Index i = 0; i < c.rows(); ++i)
    ei[static_cast<std::size_t>(i)] = expected_improvement(state, c.row(i).transpose(), o.xi);
  return c.row(argmax_lowest(ei)).transpose();
}

MinimizeResult minimize(const Objective& f, int dim, const MinimizeOptions& o,
                        const EvaluationCallback& on_evaluation) {
  if (dim < 1) throw std::invalid_argument("dimension must be >= 1");
  Rng rng(derive_seed({o.seed, static_cast<std::uint64_t>(dim), 0xB0}));
  const Eigen::MatrixXd init = initial_design(dim, rng, o.lhs_points);
  const int total = std::max(o.budget, static_cast<int>(init.rows()));

  MinimizeResult r;
  Eigen::MatrixXd X(0, dim);
  Eigen::VectorXd y(0);
  double worst = -std::numeric_limits<double>::infinity();

  for (int it = 0; it < total; ++it) {
    const auto t0 = std::chrono::steady_clock::now();
    Eigen::VectorXd x;
    if (it < init.rows()) {
      x = init.row(it).transpose();
    } else {
      GpFitOptions gp = o.gp;
      gp.seed = derive_seed({o.seed, static_cast<std::uint64_t>(it)});
      x = propose(gp_fit(X, y, gp), rng, o.propose);
    }

    Evaluation e;
    e.iteration = it;
    e.x = x;
    try {
      e.value = f(x);
      if (!std::isfinite(e.value)) throw std::runtime_error("non-finite objective");
      worst = std::max(worst, e.value);
    } catch (const std::exception&) {
      e.failed = true;
      e.value = std::isfinite(worst) ? 2.0 * std::max(worst, 0.0) : 1.0;
      if (e.value == 0.0) e.value = 1.0;
    }
    X.conservativeResize(X.rows() + 1, Eigen::NoChange);
    X.row(X.rows() - 1) = x.transpose();
    y.conservativeResize(y.size() + 1);
    y[y.size() - 1] = e.value;

    if (it == 0 || e.value < r.history[static_cast<std::size_t>(r.best_index)].value) r.best_index = it;
    e.best = it == 0 ? e.value : std::min(e.value, r.history.back().best);
    e.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    r.history.push_back(e);
    if (on_evaluation) on_evaluation(e);
  }
  return r;
}

}  // namespace clothscope::bo
