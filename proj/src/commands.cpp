#include "clothscope/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <openssl/evp.h>

#include "clothscope/checkpoint.hpp"
#include "clothscope/metric.hpp"
#include "clothscope/refine.hpp"

namespace clothscope::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <class T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void read_range(const json& j, const char* key, double& lo, double& hi) {
  if (!j.contains(key)) return;
  const json& r = j.at(key);
  if (!r.is_array() || r.size() != 2) throw std::invalid_argument(std::string(key) + " must be [lo, hi]");
  lo = r[0].get<double>();
  hi = r[1].get<double>();
}

std::string window_name(spectral::Window w) {
  return w == spectral::Window::hann_periodic ? "hann_periodic" : "hann_symmetric";
}

spectral::Window window_from_name(const std::string& s) {
  if (s == "hann_periodic") return spectral::Window::hann_periodic;
  if (s == "hann_symmetric") return spectral::Window::hann_symmetric;
  throw std::invalid_argument("unknown window '" + s + "'");
}

json model_to_json(const embed::ModelConfig& m) {
  const spectral::FrontEndConfig& f = m.front;
  return json{{"front_end",
               {{"sigma_t", f.sigma_t}, {"sigma_xy", f.sigma_xy}, {"pool", f.pool}, {"k", f.k},
                {"fps", f.fps}, {"window", window_name(f.window)}, {"log_power", f.log_power}}},
              {"base_width", m.base_width},
              {"blocks", m.blocks},
              {"embed_dim", m.embed_dim}};
}

embed::ModelConfig model_from_json(const json& j, embed::ModelConfig m) {
  if (j.contains("front_end")) {
    const json& f = j.at("front_end");
    read_opt(f, "sigma_t", m.front.sigma_t);
    read_opt(f, "sigma_xy", m.front.sigma_xy);
    read_opt(f, "pool", m.front.pool);
    read_opt(f, "k", m.front.k);
    read_opt(f, "fps", m.front.fps);
    if (f.contains("window")) m.front.window = window_from_name(f.at("window").get<std::string>());
    read_opt(f, "log_power", m.front.log_power);
  }
  read_opt(j, "base_width", m.base_width);
  read_opt(j, "blocks", m.blocks);
  read_opt(j, "embed_dim", m.embed_dim);
  m.in_channels = 4 * m.front.k;  // k peaks x (power, frequency) x (d/dx, d/dy)
  m.validate();
  return m;
}

json train_to_json(const embed::TrainConfig& t) {
  return json{{"learning_rate", t.learning_rate}, {"weight_decay", t.weight_decay},
              {"batch_size", t.batch_size},       {"margin", t.margin},
              {"epochs", t.epochs},               {"decay_epoch", t.decay_epoch},
              {"decay_factor", t.decay_factor},   {"beta1", t.beta1},
              {"beta2", t.beta2},                 {"epsilon", t.epsilon},
              {"clip_frames", t.clip_frames},     {"flip", t.flip},
              {"eval_offset", t.eval_offset}};
}

embed::TrainConfig train_from_json(const json& j, embed::TrainConfig t) {
  read_opt(j, "learning_rate", t.learning_rate);
  read_opt(j, "weight_decay", t.weight_decay);
  read_opt(j, "batch_size", t.batch_size);
  read_opt(j, "margin", t.margin);
  read_opt(j, "epochs", t.epochs);
  read_opt(j, "decay_epoch", t.decay_epoch);
  read_opt(j, "decay_factor", t.decay_factor);
  read_opt(j, "beta1", t.beta1);
  read_opt(j, "beta2", t.beta2);
  read_opt(j, "epsilon", t.epsilon);
  read_opt(j, "clip_frames", t.clip_frames);
  read_opt(j, "flip", t.flip);
  read_opt(j, "eval_offset", t.eval_offset);
  t.validate();
  return t;
}

json refine_to_json(const RefineSettings& r) {
  const bo::GpFitOptions& g = r.gp;
  return json{{"budget", r.budget},
              {"target_wind_speed", r.target_wind_speed},
              {"gp",
               {{"starts", g.starts},
                {"max_evaluations", g.max_evaluations},
                {"lengthscale", {g.lengthscale_min, g.lengthscale_max}},
                {"noise", {g.noise_min, g.noise_max}},
                {"signal", {g.signal_min, g.signal_max}},
                {"fixed_noise", g.fixed_noise ? json(*g.fixed_noise) : json(nullptr)}}},
              {"candidates",
               {{"global", r.propose.global_candidates},
                {"local", r.propose.local_candidates},
                {"local_sigma", r.propose.local_sigma},
                {"xi", r.propose.xi}}}};
}

RefineSettings refine_from_json(const json& j, RefineSettings r) {
  read_opt(j, "budget", r.budget);
  read_opt(j, "target_wind_speed", r.target_wind_speed);
  if (j.contains("gp")) {
    const json& g = j.at("gp");
    read_opt(g, "starts", r.gp.starts);
    read_opt(g, "max_evaluations", r.gp.max_evaluations);
    read_range(g, "lengthscale", r.gp.lengthscale_min, r.gp.lengthscale_max);
    read_range(g, "noise", r.gp.noise_min, r.gp.noise_max);
    read_range(g, "signal", r.gp.signal_min, r.gp.signal_max);
    if (g.contains("fixed_noise"))
      r.gp.fixed_noise = g.at("fixed_noise").is_null() ? std::nullopt
                                                       : std::optional<double>(g.at("fixed_noise").get<double>());
  }
  if (j.contains("candidates")) {
    const json& c = j.at("candidates");
    read_opt(c, "global", r.propose.global_candidates);
    read_opt(c, "local", r.propose.local_candidates);
    read_opt(c, "local_sigma", r.propose.local_sigma);
    read_opt(c, "xi", r.propose.xi);
  }
  if (r.budget < 1) throw std::invalid_argument("refine budget must be >= 1");
  if (r.gp.starts < 1 || r.gp.max_evaluations < 1) throw std::invalid_argument("gp fit needs starts and evaluations");
  if (r.propose.global_candidates < 1 || r.propose.local_candidates < 0 || r.propose.local_sigma < 0.0)
    throw std::invalid_argument("candidate counts must be positive");
  return r;
}

json sim_to_json(const SimSettings& s) {
  json j{{"wind_speed", s.wind_speed}};
  if (s.params) j["params"] = sim::params_to_json(*s.params);
  if (s.zeta) {
    j["camera"] = data::to_json(s.zeta->camera);
    j["look"] = data::to_json(s.zeta->look);
  }
  return j;
}

SimSettings sim_from_json(const json& j, SimSettings s) {
  read_opt(j, "wind_speed", s.wind_speed);
  if (j.contains("params")) s.params = sim::params_from_json(j.at("params"));
  if (j.contains("camera") != j.contains("look"))
    throw std::invalid_argument("sim.camera and sim.look must be given together");
  if (j.contains("camera"))
    s.zeta = data::RenderSample{data::camera_from_json(j.at("camera")), data::render_config_from_json(j.at("look"))};
  return s;
}

std::string hex(const unsigned char* md, unsigned len) {
  std::ostringstream os;
  os << std::hex << std::setfill('0');
  for (unsigned i = 0; i < len; ++i) os << std::setw(2) << static_cast<int>(md[i]);
  return os.str();
}

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

double population_std(const Eigen::VectorXd& y) {
  return y.size() ? std::sqrt((y.array() - y.mean()).square().mean()) : 0.0;
}

json regression_json(const embed::RegressionResult& r, double label_std) {
  return json{{"rmse", r.rmse}, {"acc_at_0.5", r.acc_at_half}, {"ridge", r.ridge},
              {"label_std", label_std}, {"rmse_over_label_std", label_std > 0 ? r.rmse / label_std : NAN},
              {"count", r.targets.size()}};
}

fs::path normalized_out(const fs::path& out) {
  if (out.empty()) throw std::invalid_argument("--out is required");
  fs::path p = out.lexically_normal();
  if (!p.has_filename()) p = p.parent_path();
  return p;
}

struct Artifact {
  fs::path rel;
  std::string strip_column;  // empty: hash the raw bytes
};

struct Context {
  const RunSpec& spec;
  const Settings& settings;
  fs::path dir;  // staging directory
  json& manifest;
  std::vector<Artifact>& artifacts;
  std::ostream& log;

  void add(const fs::path& rel, std::string strip_column = {}) { artifacts.push_back({rel, std::move(strip_column)}); }
};

const fs::path& require(const std::optional<fs::path>& p, const char* flag, Command c) {
  if (!p) throw std::invalid_argument(to_string(c) + " needs " + flag);
  return *p;
}

void run_gen(Context& cx) {
  const data::DatasetConfig& c = cx.settings.dataset;
  cx.log << "generating " << c.simulations() << " simulations x " << c.renders << " renders\n";
  const data::GenerateReport report = data::generate(c, cx.spec.seed, cx.dir, [&](int m, bool ok) {
    if (!ok || (m + 1) % 10 == 0 || m + 1 == c.simulations())
      cx.log << "  sim " << m << (ok ? " ok" : " FAILED") << "\n" << std::flush;
  });
  for (const auto& f : report.files) cx.add(f);
  for (const auto& f : report.failures) cx.manifest["failures"].push_back(f);
  cx.manifest["summary"] = {{"simulations", c.simulations()},
                            {"failed_simulations", report.failures.size()},
                            {"renders", (c.simulations() - static_cast<int>(report.failures.size())) * c.renders}};
}

json dataset_input(const data::DatasetIndex& d) {
  return json{{"index_sha256", sha256_file(d.root / "dataset.json")}, {"seed", d.seed}};
}

void run_train(Context& cx) {
  const data::DatasetIndex d = data::load_dataset(require(cx.spec.dataset, "--dataset", Command::train));
  cx.manifest["inputs"]["dataset"] = dataset_input(d);
  const auto train_set = data::load_clips(d.split(data::Split::train));
  const auto val_set = data::load_clips(d.split(data::Split::val));
  if (train_set.empty()) throw std::runtime_error("dataset " + d.root.string() + " has no training examples");

  embed::TrainConfig tc = cx.settings.train;
  tc.seed = cx.spec.seed;
  cx.log << "training on " << train_set.size() << " clips, validating on " << val_set.size() << "\n";

  std::ofstream csv(cx.dir / "train_log.csv");
  csv << "epoch,learning_rate,train_loss,val_loss,batches,wall_s\n" << std::flush;
  const embed::TrainResult res = embed::train(train_set, val_set, cx.settings.model, tc, [&](const embed::EpochLog& l) {
    csv << l.epoch << ',' << num(l.learning_rate) << ',' << num(l.train_loss) << ',' << num(l.val_loss) << ','
        << l.batches << ',' << std::setprecision(6) << l.wall_s << '\n'
        << std::flush;
    if (!csv) throw std::runtime_error("write failed for train_log.csv");
    cx.log << "  epoch " << l.epoch << " train " << l.train_loss << " val " << l.val_loss << " (" << l.wall_s
           << " s)\n"
           << std::flush;
  });
  csv.close();
  cx.add("train_log.csv", "wall_s");

  embed::save_checkpoint(cx.dir / "checkpoint.wemb", {res.model, tc.clip_frames, tc.eval_offset});
  cx.add("checkpoint.wemb");
  // Validation loss of the checkpoint as reloaded, which is what later commands see.
  const embed::Checkpoint ck = embed::load_checkpoint(cx.dir / "checkpoint.wemb");
  const double val = val_set.empty() ? std::numeric_limits<double>::quiet_NaN()
                                     : embed::evaluation_loss(ck.model, val_set, tc);
  sim::write_json(cx.dir / "metrics.json",
                  json{{"epochs", res.log.size()},
                       {"final_train_loss", res.log.back().train_loss},
                       {"final_val_loss", val},
                       {"parameter_count", ck.model.parameter_count()},
                       {"train_examples", train_set.size()},
                       {"val_examples", val_set.size()}});
  cx.add("metrics.json");
}

void run_eval(Context& cx) {
  const data::DatasetIndex d = data::load_dataset(require(cx.spec.dataset, "--dataset", Command::eval));
  const fs::path& ck_path = require(cx.spec.checkpoint, "--checkpoint", Command::eval);
  const embed::Checkpoint ck = embed::load_checkpoint(ck_path);
  cx.manifest["inputs"]["dataset"] = dataset_input(d);
  cx.manifest["inputs"]["checkpoint_sha256"] = sha256_file(ck_path);
  embed::TrainConfig protocol;
  protocol.clip_frames = ck.clip_frames;
  protocol.eval_offset = ck.eval_offset;

  const std::vector<data::Example> test = d.split(data::Split::test);
  const std::vector<data::Example> train = d.split(data::Split::train);
  std::set<int> test_sims;
  for (const auto& e : test) test_sims.insert(e.sim);
  if (test_sims.size() < 2)
    throw std::runtime_error("evaluation needs at least 2 test simulations, " + d.root.string() + " has " +
                             std::to_string(test_sims.size()));

  auto embed_all = [&](const std::vector<data::Example>& xs, const char* what) {
    cx.log << "embedding " << xs.size() << " " << what << " clips\n" << std::flush;
    std::vector<embed::Embedding> out;
    for (const auto& e : xs) out.push_back(embed::embed_clip(ck.model, read_vvol(e.file), protocol));
    return out;
  };
  const auto e_test = embed_all(test, "test");
  const auto e_train = embed_all(train, "train");

  std::vector<int> labels;
  for (const auto& e : test) labels.push_back(e.sim);
  std::vector<embed::Triplet> triplets = embed::all_triplets(labels);
  const int cap = cx.settings.eval.max_triplets;
  if (cap > 0 && triplets.size() > static_cast<std::size_t>(cap)) {
    Rng rng(derive_seed({cx.spec.seed, 0x7219}));
    triplets = embed::sample_triplets(labels, static_cast<std::size_t>(cap), rng);
  }
  const double accuracy = embed::triplet_accuracy(e_test, triplets);

  Eigen::VectorXd y_test(static_cast<Eigen::Index>(test.size())), y_train(static_cast<Eigen::Index>(train.size()));
  for (std::size_t i = 0; i < test.size(); ++i) y_test[static_cast<Eigen::Index>(i)] = test[i].params.wind_speed;
  for (std::size_t i = 0; i < train.size(); ++i) y_train[static_cast<Eigen::Index>(i)] = train[i].params.wind_speed;
  const double sd = population_std(y_test);

  json regression;
  if (!train.empty()) {
    const auto a = embed::regress_ridge(embed::to_matrix(e_train), y_train, embed::to_matrix(e_test), y_test,
                                        cx.settings.eval.ridge);
    regression["ridge_train_to_test"] = regression_json(a, sd);
  }
  const double loo_ridge = cx.settings.eval.ridge > 0.0 ? cx.settings.eval.ridge : 1e-6;
  const auto b = embed::regress_pca_loo(embed::to_matrix(e_test), y_test, cx.settings.eval.pca_components, loo_ridge);
  regression["pca_leave_one_out"] = regression_json(b, sd);
  regression["pca_leave_one_out"]["components"] =
      std::min({cx.settings.eval.pca_components, static_cast<int>(test.size()) - 1, ck.model.config().embed_dim});

  sim::write_json(cx.dir / "report.json",
                  json{{"triplet_accuracy", accuracy},
                       {"triplets", triplets.size()},
                       {"test_simulations", test_sims.size()},
                       {"test_examples", test.size()},
                       {"wind_speed_regression", regression}});
  cx.add("report.json");

  std::ofstream csv(cx.dir / "embeddings.csv");
  csv << "id,sim,render,split,v_w,rho_A";
  for (int k = 0; k < sim::kBendDirections * sim::kBendSamples; ++k) csv << ",bend_" << k;
  for (int k = 0; k < ck.model.config().embed_dim; ++k) csv << ",e_" << k;
  csv << '\n';
  auto rows = [&](const std::vector<data::Example>& xs, const std::vector<embed::Embedding>& es, int& id) {
    for (std::size_t i = 0; i < xs.size(); ++i, ++id) {
      const data::Example& e = xs[i];
      csv << id << ',' << e.sim << ',' << e.render << ',' << data::to_string(e.split) << ','
          << num(e.params.wind_speed) << ',' << num(e.params.area_weight);
      for (const auto& row : e.params.bend)
        for (double v : row) csv << ',' << num(v);
      for (double v : es[i]) csv << ',' << num(v);
      csv << '\n';
    }
  };
  int id = 0;
  rows(train, e_train, id);
  rows(test, e_test, id);
  csv.close();
  if (!csv) throw std::runtime_error("write failed for embeddings.csv");
  cx.add("embeddings.csv");
  cx.log << "triplet accuracy " << accuracy << " over " << triplets.size() << " triplets\n";
}

void run_refine(Context& cx) {
  const Settings& s = cx.settings;
  const fs::path& ck_path = require(cx.spec.checkpoint, "--checkpoint", Command::refine);
  const embed::Checkpoint ck = embed::load_checkpoint(ck_path);
  cx.manifest["inputs"]["checkpoint_sha256"] = sha256_file(ck_path);
  const refine::SearchSpace& space = s.dataset.space;

  VideoVolume target;
  data::RenderSample zeta;
  json target_info;
  std::optional<sim::ClothParams> truth;
  if (cx.spec.target) {
    const fs::path& meta = require(cx.spec.target_meta, "--meta (camera and look of the target)", Command::refine);
    const json m = sim::read_json(meta);
    if (!m.contains("camera") || !m.contains("look"))
      throw std::invalid_argument(meta.string() + " must contain \"camera\" and \"look\"");
    zeta = {data::camera_from_json(m.at("camera")), data::render_config_from_json(m.at("look"))};
    target = read_vvol(*cx.spec.target);
    cx.manifest["inputs"]["target_sha256"] = sha256_file(*cx.spec.target);
    cx.manifest["inputs"]["meta_sha256"] = sha256_file(meta);
    target_info = {{"synthetic", false}};
  } else {
    if (s.refine.target_wind_speed < space.wind_min || s.refine.target_wind_speed > space.wind_max)
      throw std::invalid_argument("target_wind_speed lies outside the search space");
    Rng rng(derive_seed({cx.spec.seed, 0x7A26}));
    sim::ClothParams p = space.sample(rng);
    p.wind_speed = s.refine.target_wind_speed;
    truth = p;
    zeta = data::sample_render(s.dataset, derive_seed({cx.spec.seed, 0x2E7A}));
    target = refine::simulate_and_render(p, data::render_setup(s.dataset, zeta));
    write_vvol(cx.dir / "target.vvol", target);
    cx.add("target.vvol");
    target_info = {{"synthetic", true}, {"params", sim::params_to_json(p)}};
  }
  target_info["camera"] = data::to_json(zeta.camera);
  target_info["look"] = data::to_json(zeta.look);
  sim::write_json(cx.dir / "target.json", target_info);
  cx.add("target.json");

  refine::RenderSetup setup = data::render_setup(s.dataset, zeta);
  if (target.height != setup.output_size || target.width != setup.output_size)
    throw std::invalid_argument("target is " + std::to_string(target.height) + "x" + std::to_string(target.width) +
                                ", expected " + std::to_string(setup.output_size) + "x" +
                                std::to_string(setup.output_size));
  setup.camera.image_height = setup.camera.image_width = setup.render_size;
  cx.manifest["search_space"] = data::to_json(space);
  cx.manifest["zeta"] = {{"camera", target_info["camera"]}, {"look", target_info["look"]}};
  cx.manifest["budget"] = s.refine.budget;

  refine::RefineOptions o;
  o.budget = s.refine.budget;
  o.seed = cx.spec.seed;
  o.gp = s.refine.gp;
  o.propose = s.refine.propose;

  refine::HistoryWriter history(cx.dir / "history.csv");
  cx.add("history.csv", "wall_s");
  const refine::RefineResult res = refine::refine(target, ck, space, setup, o, [&](const refine::RefineRecord& r) {
    history.append(r);
    cx.log << "  iter " << r.iteration << " d2 " << r.d2 << " best " << r.best_d2 << " v_w " << r.params.wind_speed
           << (r.failed ? " (simulation failed)" : "") << "\n"
           << std::flush;
  });

  std::ofstream plot(cx.dir / "plot.csv");
  plot << "iter,d2,best_d2,v_w,best_v_w\n";
  int best = 0;
  for (std::size_t i = 0; i < res.records.size(); ++i) {
    const auto& r = res.records[i];
    if (r.d2 < res.records[static_cast<std::size_t>(best)].d2) best = static_cast<int>(i);
    plot << r.iteration << ',' << num(r.d2) << ',' << num(r.best_d2) << ',' << num(r.params.wind_speed) << ','
         << num(res.records[static_cast<std::size_t>(best)].params.wind_speed) << '\n';
  }
  plot.close();
  if (!plot) throw std::runtime_error("write failed for plot.csv");
  cx.add("plot.csv");

  const refine::RefineRecord& b = res.best();
  const double center = res.records.front().d2;
  int failures = 0;
  for (const auto& r : res.records) failures += r.failed;
  json result{{"evaluations", res.budget_used},
              {"failed_evaluations", failures},
              {"center_d2", center},
              {"best", {{"iteration", b.iteration}, {"d2", b.d2}, {"params", sim::params_to_json(b.params)}}},
              {"best_over_center", center > 0 ? b.d2 / center : NAN}};
  if (truth) {
    result["truth"] = sim::params_to_json(*truth);
    result["wind_speed_error"] = std::abs(b.params.wind_speed - truth->wind_speed);
  }
  sim::write_json(cx.dir / "result.json", result);
  cx.add("result.json");
  cx.log << "best d2 " << b.d2 << " (centre " << center << "), v_w " << b.params.wind_speed << "\n";
}

void run_sim(Context& cx) {
  const Settings& s = cx.settings;
  sim::ClothParams p;
  if (s.sim.params) {
    p = *s.sim.params;
  } else {
    p = s.dataset.space.center();
    p.wind_speed = s.sim.wind_speed;
  }
  p.validate();
  const data::RenderSample zeta = s.sim.zeta ? *s.sim.zeta : data::sample_render(s.dataset, derive_seed({cx.spec.seed, 0x51}));
  refine::RenderSetup setup = data::render_setup(s.dataset, zeta);
  setup.validate();

  const sim::ClothMesh mesh = setup.scene.build_mesh();
  sim::SimState start = mesh.state;
  if (setup.relax_seconds > 0.0)
    start = sim::relax(start, mesh.topology, p, setup.scene.scene, setup.relax_seconds);
  const sim::MeshSequence seq = sim::simulate(p, mesh.topology, start, setup.scene.scene);

  fs::create_directories(cx.dir / "frames");
  for (std::size_t f = 0; f < seq.frames.size(); ++f) {
    std::ostringstream name;
    name << "frame_" << std::setw(3) << std::setfill('0') << f << ".obj";
    const fs::path rel = fs::path("frames") / name.str();
    std::ofstream os(cx.dir / rel);
    sim::write_obj(os, seq.frames[f], mesh.topology);
    os.close();
    if (!os) throw std::runtime_error("write failed for " + rel.string());
    cx.add(rel);
  }
  const VideoVolume v = render::resize_crop(render::render_sequence(seq, mesh.topology, setup.camera, setup.look),
                                            setup.output_size, setup.output_size);
  write_vvol(cx.dir / "render.vvol", v);
  cx.add("render.vvol");
  sim::write_json(cx.dir / "params.json", sim::params_to_json(p));
  cx.add("params.json");
  sim::write_json(cx.dir / "zeta.json", json{{"camera", data::to_json(zeta.camera)}, {"look", data::to_json(zeta.look)}});
  cx.add("zeta.json");
  cx.log << "wrote " << seq.frames.size() << " frames and a " << v.frames << "x" << v.height << "x" << v.width
         << " clip\n";
}

}  // namespace

std::string to_string(Command c) {
  switch (c) {
    case Command::gen: return "gen";
    case Command::train: return "train";
    case Command::eval: return "eval";
    case Command::refine: return "refine";
    case Command::sim: return "sim";
  }
  return "gen";
}

Command command_from_string(const std::string& s) {
  for (Command c : {Command::gen, Command::train, Command::eval, Command::refine, Command::sim})
    if (to_string(c) == s) return c;
  throw std::invalid_argument("unknown command '" + s + "'");
}

Settings preset(bool desk) {
  Settings s;
  if (desk) {
    s.dataset = data::desk_dataset_config();
    s.model = embed::desk_model_config();
  } else {
    s.dataset = data::full_dataset_config();
    s.model = embed::full_model_config();
  }
  return s;
}

Settings settings_from_json(const json& j, const Settings& base) {
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  static const std::set<std::string> sections{"dataset", "model", "train", "eval", "refine", "sim"};
  for (const auto& [key, value] : j.items())
    if (!sections.count(key)) throw std::invalid_argument("unknown config section '" + key + "'");
  Settings s = base;
  if (j.contains("dataset")) s.dataset = data::dataset_config_from_json(j.at("dataset"), base.dataset);
  if (j.contains("model")) s.model = model_from_json(j.at("model"), base.model);
  if (j.contains("train")) s.train = train_from_json(j.at("train"), base.train);
  if (j.contains("eval")) {
    const json& e = j.at("eval");
    read_opt(e, "max_triplets", s.eval.max_triplets);
    read_opt(e, "ridge", s.eval.ridge);
    read_opt(e, "pca_components", s.eval.pca_components);
    if (s.eval.pca_components < 1) throw std::invalid_argument("pca_components must be >= 1");
  }
  if (j.contains("refine")) s.refine = refine_from_json(j.at("refine"), base.refine);
  if (j.contains("sim")) s.sim = sim_from_json(j.at("sim"), base.sim);
  return s;
}

json to_json(const Settings& s) {
  return json{{"dataset", data::to_json(s.dataset)},
              {"model", model_to_json(s.model)},
              {"train", train_to_json(s.train)},
              {"eval", {{"max_triplets", s.eval.max_triplets}, {"ridge", s.eval.ridge},
                        {"pca_components", s.eval.pca_components}}},
              {"refine", refine_to_json(s.refine)},
              {"sim", sim_to_json(s.sim)}};
}

Settings resolve_settings(const RunSpec& spec) {
  Settings s = preset(spec.desk);
  if (spec.config) s = settings_from_json(sim::read_json(*spec.config), s);
  if (spec.budget) {
    if (*spec.budget < 1) throw std::invalid_argument("--budget must be >= 1");
    s.refine.budget = *spec.budget;
  }
  return s;
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 failed");
  return hex(md, len);
}

std::string sha256_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw std::runtime_error("SHA-256 failed");
  }
  std::vector<char> buf(1 << 16);
  while (is) {
    is.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(is.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  return hex(md, len);
}

std::string sha256_csv_without(const fs::path& path, const std::string& column) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  auto split = [](const std::string& line) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    return f;
  };
  std::string line, kept;
  std::getline(is, line);
  const auto header = split(line);
  const auto it = std::find(header.begin(), header.end(), column);
  if (it == header.end()) throw std::runtime_error(path.string() + " has no column " + column);
  const std::size_t drop = static_cast<std::size_t>(it - header.begin());
  do {
    const auto f = split(line);
    for (std::size_t i = 0, n = 0; i < f.size(); ++i)
      if (i != drop) kept += (n++ ? "," : "") + f[i];
    kept += '\n';
  } while (std::getline(is, line));
  return sha256_hex(kept);
}

json run(const RunSpec& spec, std::ostream& log) {
  const Settings settings = resolve_settings(spec);
  const json config = to_json(settings);
  const fs::path out = normalized_out(spec.out);
  if (fs::exists(out) && !(fs::is_directory(out) && fs::is_empty(out)))
    throw std::runtime_error("output directory " + out.string() + " exists and is not empty");
  const fs::path staging = out.string() + ".partial";
  fs::remove_all(staging);  // left over from an earlier failed run of this output
  fs::create_directories(staging);

  json manifest{{"format", "clothscope-manifest"},
                {"version", 1},
                {"command", to_string(spec.command)},
                {"seed", spec.seed},
                {"desk", spec.desk},
                {"config_sha256", sha256_hex(config.dump())},
                {"config", config},
                {"inputs", json::object()},
                {"failures", json::array()}};
  std::vector<Artifact> artifacts;
  Context cx{spec, settings, staging, manifest, artifacts, log};
  try {
    switch (spec.command) {
      case Command::gen: run_gen(cx); break;
      case Command::train: run_train(cx); break;
      case Command::eval: run_eval(cx); break;
      case Command::refine: run_refine(cx); break;
      case Command::sim: run_sim(cx); break;
    }
    json list = json::array();
    for (const Artifact& a : artifacts) {
      json entry{{"path", a.rel.generic_string()}};
      if (a.strip_column.empty()) {
        entry["sha256"] = sha256_file(staging / a.rel);
      } else {
        entry["sha256"] = sha256_csv_without(staging / a.rel, a.strip_column);
        entry["excludes_column"] = a.strip_column;
      }
      list.push_back(std::move(entry));
    }
    manifest["artifacts"] = std::move(list);
    sim::write_json(staging / "manifest.json", manifest);
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string(e.what()) + " (partial output kept in " + staging.string() + ")");
  }
  if (fs::exists(out)) fs::remove(out);
  fs::rename(staging, out);
  return manifest;
}

}  // namespace clothscope::cli
