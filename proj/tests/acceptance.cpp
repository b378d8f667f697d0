// Acceptance suite: one PASS/FAIL line per criterion. Usage:
//   acceptance <work-dir> [criterion ...]
// Criteria 6, 7, 9 and 10 drive the command layer end to end under the desk
// preset and share the dataset and checkpoint written into <work-dir>.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "clothscope/bayesopt.hpp"
#include "clothscope/clothsim.hpp"
#include "clothscope/commands.hpp"
#include "clothscope/dataset.hpp"
#include "clothscope/gp.hpp"
#include "clothscope/network.hpp"
#include "clothscope/refine.hpp"
#include "clothscope/render.hpp"
#include "clothscope/rng.hpp"
#include "clothscope/spectral.hpp"
#include "oracles.hpp"

using namespace clothscope;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

fs::path g_work;

constexpr std::uint64_t kDataSeed = 1;
constexpr std::uint64_t kTrainSeed = 3;

json run_cli(cli::Command c, const std::string& out, std::uint64_t seed, const json& config = json::object(),
             const std::function<void(cli::RunSpec&)>& extra = {}) {
  cli::RunSpec s;
  s.command = c;
  s.out = g_work / out;
  s.seed = seed;
  s.desk = true;
  if (!config.empty()) {
    const fs::path cfg = g_work / (out + ".config.json");
    std::ofstream(cfg) << config.dump(2);
    s.config = cfg;
  }
  if (extra) extra(s);
  std::ostringstream log;
  return cli::run(s, log);
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

std::map<std::string, std::string> file_tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files[fs::relative(e.path(), root).generic_string()] = cli::sha256_file(e.path());
  return files;
}

// ---------------------------------------------------------------- 1, 2

Outcome spectral_oracle() {
  const auto t0 = Clock::now();
  Rng rng(derive_seed({2024, 1}));
  const int sizes[] = {16, 30, 64};
  double worst = 0.0;
  int topk_mismatch = 0;
  for (int i = 0; i < 1000; ++i) {
    const int n = sizes[i % 3];
    std::vector<double> f(n);
    for (double& x : f) x = rng.normal() + rng.uniform(-3, 3);
    const auto got = spectral::periodogram(f);
    const auto want = oracle::periodogram(f);
    double peak = 0;
    for (double w : want) peak = std::max(peak, w);
    for (std::size_t b = 0; b < got.size(); ++b)
      worst = std::max(worst, std::abs(got[b] - want[b]) / std::max(std::abs(want[b]), 1e-12 * peak));

    const int k = 1 + static_cast<int>(i % 4);
    std::vector<int> order(want.size() - 1);
    std::iota(order.begin(), order.end(), 1);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return want[a] > want[b]; });
    const auto peaks = spectral::topk_peaks(got, k, n);
    for (int j = 0; j < k; ++j) {
      if (peaks[j].bin != order[j]) ++topk_mismatch;
      worst = std::max(worst, std::abs(peaks[j].power - want[order[j]]) / std::max(want[order[j]], 1e-12 * peak));
      worst = std::max(worst, std::abs(peaks[j].frequency - 2.0 * order[j] / n) / (2.0 * order[j] / n));
    }
  }
  const double t = seconds_since(t0);
  return {worst < 1e-5 && topk_mismatch == 0 && t < 10.0,
          "max rel err " + fmt("%.2e", worst) + " (< 1e-5), top-k bin mismatches " + std::to_string(topk_mismatch) +
              ", " + fmt("%.2f", t) + " s (< 10 s)"};
}

Outcome parseval() {
  Rng rng(derive_seed({2024, 2}));
  const int sizes[] = {16, 30, 64};
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const int n = sizes[i % 3];
    const auto w = spectral::hann_window(n);
    std::vector<double> f(n);
    for (double& x : f) x = rng.normal() * rng.uniform(0.1, 5);
    double mean = 0;
    for (double x : f) mean += x;
    mean /= n;
    double energy = 0;
    for (int t = 0; t < n; ++t) energy += std::pow(w[t] * (f[t] - mean), 2);
    const auto I = spectral::periodogram(f);
    double total = I[0];
    for (int b = 1; b < static_cast<int>(I.size()); ++b) total += (n % 2 == 0 && b == n / 2) ? I[b] : 2 * I[b];
    worst = std::max(worst, std::abs(total - energy) / energy);
  }
  return {worst < 1e-6, "max rel deviation " + fmt("%.2e", worst) + " over 1000 signals (< 1e-6)"};
}

// ---------------------------------------------------------------- 3

Outcome bending_conservation() {
  Rng rng(derive_seed({2024, 3}));
  double worst_f = 0, worst_t = 0;
  int tested = 0;
  while (tested < 10000) {
    std::array<sim::Vec3, 4> x;
    for (auto& p : x) p = sim::Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    const auto f = sim::bend_element_forces(x, rng.uniform(-1.5, 1.5), rng.uniform(0.01, 10.0));
    if (f.degenerate) continue;
    ++tested;
    sim::Vec3 net = sim::Vec3::Zero(), torque = sim::Vec3::Zero();
    for (int k = 0; k < 4; ++k) {
      net += f.force[k];
      torque += x[k].cross(f.force[k]);
    }
    worst_f = std::max(worst_f, net.norm());
    worst_t = std::max(worst_t, torque.norm());
  }

  bool flat_zero = true;
  for (int i = 0; i < 1000; ++i) {
    // Coplanar hinge in a random plane, folded open (rest angle 0).
    const sim::Vec3 a(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    const sim::Vec3 u = sim::Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
    const sim::Vec3 v = u.cross(sim::Vec3(rng.normal(), rng.normal(), rng.normal())).normalized();
    const std::array<sim::Vec3, 4> x{a + u, a - u, a + 0.5 * u + v, a - 0.2 * u - 0.7 * v};
    const auto f = sim::bend_element_forces(x, 0.0, rng.uniform(0.01, 10.0));
    if (f.dihedral != 0.0) continue;  // rounding moved a vertex off the plane
    for (const auto& p : f.force) flat_zero = flat_zero && p == sim::Vec3::Zero();
  }
  const sim::SceneFile scene = sim::default_scene_file(sim::SceneKind::flag);
  sim::ClothMesh m = scene.build_mesh();
  for (auto& p : m.state.positions) p.y() = 0.0;
  sim::ClothParams params;
  params.bend = sim::default_base_bending();
  for (const auto& p : sim::bending_forces(m.state, m.topology, params, scene.scene.bend_alpha_step))
    flat_zero = flat_zero && p == sim::Vec3::Zero();

  return {worst_f < 1e-9 && worst_t < 1e-9 && flat_zero,
          "10000 hinges: max |net force| " + fmt("%.2e", worst_f) + ", max |net torque| " + fmt("%.2e", worst_t) +
              " (< 1e-9); flat hinges exactly zero: " + (flat_zero ? "yes" : "no")};
}

// ---------------------------------------------------------------- 4

Outcome simulator_sanity() {
  const data::DatasetConfig cfg = data::desk_dataset_config();
  const sim::ClothMesh mesh = cfg.scene.build_mesh();
  sim::ClothParams params = refine::SearchSpace{}.center();
  params.wind_speed = 5.0;
  const sim::SimState start = sim::relax(mesh.state, mesh.topology, params, cfg.scene.scene, cfg.relax_seconds);
  const sim::MeshSequence seq = sim::simulate(params, mesh.topology, start, cfg.scene.scene);

  bool finite = seq.frames.size() == 60;
  double pin_drift = 0;
  for (const auto& f : seq.frames) {
    for (const auto& x : f) finite = finite && x.allFinite();
    for (int v : mesh.topology.pinned) pin_drift = std::max(pin_drift, (f[v] - mesh.state.positions[v]).norm());
  }
  const data::RenderSample z = data::sample_render(cfg, data::render_seed(kDataSeed, 0, 0));
  const VideoVolume clip = render::resize_crop(render::render_sequence(seq, mesh.topology, z.camera, z.look),
                                               cfg.output_size, cfg.output_size);
  int changed = 0;
  const auto a = clip.frame(0, 30), b = clip.frame(0, 31);
  for (std::size_t i = 0; i < a.size(); ++i) changed += std::abs(a[i] - b[i]) > 0.05f;
  const double frac = static_cast<double>(changed) / static_cast<double>(a.size());
  return {finite && pin_drift == 0.0 && frac >= 0.01,
          std::string("60 finite frames: ") + (finite ? "yes" : "no") + ", pinned drift " + fmt("%.1e", pin_drift) +
              ", pixels changing > 0.05 between frames 30 and 31: " + fmt("%.1f", 100 * frac) + "% (>= 1%)"};
}

// ---------------------------------------------------------------- 5

Outcome gradient_check() {
  const auto t0 = Clock::now();
  Rng rng(derive_seed({2024, 5}));
  std::string details;
  bool ok = true;
  double worst_all = 0;

  auto batch = [&](int n, int size) {
    std::vector<VideoVolume> f;
    for (int i = 0; i < n; ++i) {
      VideoVolume v(4, 1, size, size);
      for (float& x : v.data) x = static_cast<float>(rng.uniform(-1, 1));
      f.push_back(std::move(v));
    }
    return f;
  };
  auto perturb_biases = [&](embed::EmbeddingModel& m) {
    for (const auto& p : m.layout())
      if (p.shape.size() == 1)
        for (double& x : m.tensor(p.name)) x = rng.uniform(-0.1, 0.1);
  };

  // Narrow network, every parameter.
  embed::ModelConfig narrow;
  narrow.base_width = 4;
  narrow.embed_dim = 6;
  embed::EmbeddingModel small = embed::EmbeddingModel::initialized(narrow, 11);
  perturb_biases(small);
  std::vector<std::size_t> all(small.parameter_count());
  std::iota(all.begin(), all.end(), 0);
  const auto r1 = oracle::finite_difference(small, batch(5, 16), {0, 0, 1, 1, 2}, 1.0, all);
  ok = ok && r1.max_rel_error < 1e-4;
  worst_all = std::max(worst_all, r1.max_rel_error);

  // Desk architecture, per tensor: up to 24 entries each, spread over the tensor.
  embed::EmbeddingModel desk = embed::EmbeddingModel::initialized(embed::desk_model_config(), 12);
  perturb_biases(desk);
  const auto feats = batch(4, 32);
  const std::vector<int> labels{0, 0, 1, 1};
  std::size_t refined = r1.refined, checked = r1.checked;
  int tensors = 0;
  for (const auto& info : desk.layout()) {
    std::vector<std::size_t> idx;
    const std::size_t n = info.size(), take = std::min<std::size_t>(n, 24);
    for (std::size_t k = 0; k < take; ++k) idx.push_back(info.offset + (k * n) / take);
    const auto r = oracle::finite_difference(desk, feats, labels, 1.0, idx);
    ok = ok && r.max_rel_error < 1e-4;
    worst_all = std::max(worst_all, r.max_rel_error);
    refined += r.refined;
    checked += r.checked;
    ++tensors;
  }
  const double t = seconds_since(t0);
  ok = ok && t < 120.0;
  details = "max rel err " + fmt("%.2e", worst_all) + " (< 1e-4) over " + std::to_string(checked) +
            " entries (all " + std::to_string(small.parameter_count()) + " of a narrow net, " + std::to_string(tensors) +
            " desk tensors sampled; " + std::to_string(refined) + " stencils narrowed at ReLU kinks), " +
            fmt("%.1f", t) + " s (< 120 s)";
  return {ok, details};
}

// ---------------------------------------------------------------- 6, 7

double g_pipeline_seconds = 0;

void ensure_pipeline() {
  if (fs::exists(g_work / "eval" / "report.json")) return;
  const auto t0 = Clock::now();
  run_cli(cli::Command::gen, "dataset", kDataSeed);
  run_cli(cli::Command::train, "model", kTrainSeed, json::object(),
          [](cli::RunSpec& s) { s.dataset = g_work / "dataset"; });
  run_cli(cli::Command::eval, "eval", 0, json::object(), [](cli::RunSpec& s) {
    s.dataset = g_work / "dataset";
    s.checkpoint = g_work / "model" / "checkpoint.wemb";
  });
  g_pipeline_seconds = seconds_since(t0);
}

Outcome metric_separation() {
  ensure_pipeline();
  const json r = read_json(g_work / "eval" / "report.json");
  const json m = read_json(g_work / "model" / "metrics.json");
  const json d = read_json(g_work / "dataset" / "dataset.json");
  const double acc = r.at("triplet_accuracy");
  const long triplets = r.at("triplets");
  const int epochs = m.at("epochs");
  const int sims = static_cast<int>(d.at("simulations").size());
  const int renders = d.at("config").at("renders");
  const bool ok = acc >= 0.85 && triplets >= 500 && epochs <= 30 && sims == 40 && renders == 4 &&
                  g_pipeline_seconds < 900.0;
  return {ok, "triplet accuracy " + fmt("%.4f", acc) + " (>= 0.85) on " + std::to_string(triplets) +
                  " held-out triplets (>= 500); " + std::to_string(sims) + " sims x " + std::to_string(renders) +
                  " renders, " + std::to_string(epochs) + " epochs; gen+train+eval " + fmt("%.0f", g_pipeline_seconds) +
                  " s (< 900 s)"};
}

Outcome wind_regression() {
  ensure_pipeline();
  const json r = read_json(g_work / "eval" / "report.json").at("wind_speed_regression");
  const json a = r.at("ridge_train_to_test");
  const double rmse = a.at("rmse"), sd = a.at("label_std");
  const json b = r.at("pca_leave_one_out");
  return {rmse < 0.6 * sd, "ridge test RMSE " + fmt("%.3f", rmse) + " m/s vs 0.6 x label std " + fmt("%.3f", 0.6 * sd) +
                               " (ratio " + fmt("%.3f", rmse / sd) + "); PCA leave-one-out RMSE " +
                               fmt("%.3f", b.at("rmse").get<double>()) + ", Acc@0.5 " +
                               fmt("%.2f", a.at("acc_at_0.5").get<double>())};
}

// ---------------------------------------------------------------- 8

Outcome bayesopt_sanity() {
  int solved = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    bo::MinimizeOptions o;
    o.budget = 25;
    o.seed = seed;
    const auto r = bo::minimize([](const Eigen::VectorXd& x) { return (x[0] - 0.3) * (x[0] - 0.3); }, 1, o);
    double best_gap = 1e300;
    for (const auto& e : r.history) best_gap = std::min(best_gap, std::abs(e.x[0] - 0.3));
    solved += r.history.size() <= 25 && best_gap <= 0.05;
  }

  Rng rng(derive_seed({2024, 8}));
  double interp = 0, ei_observed = 0, ei_min = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 6 + trial % 10, d = 1 + trial % 5;
    Eigen::MatrixXd X(n, d);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < d; ++j) X(i, j) = rng.uniform(-1, 1);
      y[i] = std::sin(3 * X(i, 0)) + X.row(i).squaredNorm() + rng.normal() * 0.1;
    }
    bo::GpFitOptions o;
    o.fixed_noise = 1e-8;
    o.seed = static_cast<std::uint64_t>(trial);
    const bo::GPState s = bo::gp_fit(X, y, o);
    for (int i = 0; i < n; ++i) {
      interp = std::max(interp, std::abs(bo::gp_predict(s, X.row(i).transpose()).mean - y[i]));
      ei_observed = std::max(ei_observed, bo::expected_improvement(s, X.row(i).transpose()));
    }
    for (int q = 0; q < 500; ++q) {
      Eigen::VectorXd x(d);
      for (int j = 0; j < d; ++j) x[j] = rng.uniform(-1.5, 1.5);
      ei_min = std::min(ei_min, bo::expected_improvement(s, x));
    }
  }
  const bool ok = solved >= 9 && interp < 1e-4 && ei_observed < 1e-6 && ei_min >= 0.0;
  return {ok, "1-D quadratic solved on " + std::to_string(solved) + "/10 seeds (>= 9); interpolation error " +
                  fmt("%.1e", interp) + " (< 1e-4); EI at observed points " + fmt("%.1e", ei_observed) +
                  " (< 1e-6); min EI " + fmt("%.1e", ei_min) + " (>= 0)"};
}

// ---------------------------------------------------------------- 9

Outcome end_to_end_refinement() {
  ensure_pipeline();
  const auto t0 = Clock::now();
  int good = 0;
  std::string per_seed;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const std::string out = "refine_seed" + std::to_string(seed);
    if (!fs::exists(g_work / out / "result.json"))
      run_cli(cli::Command::refine, out, seed, json::object(), [](cli::RunSpec& s) {
        s.checkpoint = g_work / "model" / "checkpoint.wemb";
        s.budget = 50;
      });
    const json r = read_json(g_work / out / "result.json");
    const double truth = r.at("truth").at("wind_speed");
    const double vw = r.at("best").at("params").at("wind_speed");
    const double ratio = r.at("best_over_center");
    const bool ok = std::abs(vw - truth) <= 1.5 && ratio <= 0.3 && r.at("evaluations") == 50;
    good += ok;
    per_seed += (seed ? "; " : "") + std::to_string(seed) + ": v_w " + fmt("%.2f", vw) + ", d2 ratio " +
                fmt("%.3f", ratio) + (ok ? "" : " [miss]");
  }
  const double t = seconds_since(t0);
  return {good >= 4 && t < 1800.0, std::to_string(good) + "/5 seeds within |v_w - 5| <= 1.5 and best d2 <= 0.3 x centre (>= 4) [" +
                                       per_seed + "], " + fmt("%.0f", t) + " s (< 1800 s)"};
}

// ---------------------------------------------------------------- 10

Outcome reproducibility() {
  ensure_pipeline();
  std::vector<std::string> problems;

  run_cli(cli::Command::gen, "dataset_rerun", kDataSeed);
  const auto a = file_tree(g_work / "dataset"), b = file_tree(g_work / "dataset_rerun");
  if (a != b) problems.push_back("regenerated dataset differs");

  const json short_train{{"train", {{"epochs", 3}}}};
  for (const char* out : {"train_short_a", "train_short_b"})
    run_cli(cli::Command::train, out, kTrainSeed, short_train, [](cli::RunSpec& s) { s.dataset = g_work / "dataset"; });
  if (read_json(g_work / "train_short_a" / "metrics.json") != read_json(g_work / "train_short_b" / "metrics.json"))
    problems.push_back("training metrics differ");
  if (read_json(g_work / "train_short_a" / "manifest.json").at("artifacts") !=
      read_json(g_work / "train_short_b" / "manifest.json").at("artifacts"))
    problems.push_back("training checksums differ");

  for (const char* out : {"refine_short_a", "refine_short_b"})
    run_cli(cli::Command::refine, out, 7, json::object(), [](cli::RunSpec& s) {
      s.checkpoint = g_work / "train_short_a" / "checkpoint.wemb";
      s.budget = 10;
    });
  if (read_json(g_work / "refine_short_a" / "result.json") != read_json(g_work / "refine_short_b" / "result.json"))
    problems.push_back("refinement results differ");
  if (read_json(g_work / "refine_short_a" / "manifest.json").at("artifacts") !=
      read_json(g_work / "refine_short_b" / "manifest.json").at("artifacts"))
    problems.push_back("refinement checksums differ");

  run_cli(cli::Command::eval, "eval_rerun", 0, json::object(), [](cli::RunSpec& s) {
    s.dataset = g_work / "dataset";
    s.checkpoint = g_work / "model" / "checkpoint.wemb";
  });
  if (read_json(g_work / "eval" / "report.json") != read_json(g_work / "eval_rerun" / "report.json"))
    problems.push_back("evaluation report differs");

  std::string detail = "gen rerun byte-identical over " + std::to_string(a.size()) +
                       " files; 3-epoch train, budget-10 refine and eval reruns identical";
  if (!problems.empty()) {
    detail = "";
    for (const auto& p : problems) detail += (detail.empty() ? "" : "; ") + p;
  }
  return {problems.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: acceptance <work-dir> [criterion ...]\n";
    return 2;
  }
  g_work = fs::absolute(argv[1]);
  fs::remove_all(g_work);
  fs::create_directories(g_work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"spectral oracle equivalence", spectral_oracle},
      {"Parseval identity", parseval},
      {"bending element conservation", bending_conservation},
      {"simulator sanity", simulator_sanity},
      {"gradient correctness", gradient_check},
      {"metric-learning separation", metric_separation},
      {"wind-speed regression", wind_regression},
      {"Bayesian optimisation sanity", bayesopt_sanity},
      {"end-to-end refinement", end_to_end_refinement},
      {"reproducibility", reproducibility},
  };
  std::set<int> selected;
  for (int i = 2; i < argc; ++i) selected.insert(std::stoi(argv[i]));

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << id << "] " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  std::cout << (failed ? "FAILED " : "ALL PASSED ") << failed << " failing criteria" << std::endl;
  return failed ? 1 : 0;
}
