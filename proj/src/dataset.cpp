#include "clothscope/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <stdexcept>

namespace clothscope::data {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json vec_to_json(const sim::Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

sim::Vec3 vec_from_json(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3)
    throw std::invalid_argument(std::string(what) + " must be a 3-element array");
  return sim::Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

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

std::string sim_dir(int m) { return "sim_" + std::to_string(m); }
std::string render_file(int r) { return "render_" + std::to_string(r) + ".vvol"; }

}  // namespace

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw std::invalid_argument("unknown split '" + s + "'");
}

Split DatasetConfig::split_of(int sim_id) const {
  if (sim_id < 0 || sim_id >= simulations()) throw std::out_of_range("simulation id out of range");
  if (sim_id < train_simulations) return Split::train;
  if (sim_id < train_simulations + val_simulations) return Split::val;
  return Split::test;
}

void DatasetConfig::validate() const {
  scene.validate();
  space.validate();
  if (train_simulations < 0 || val_simulations < 0 || test_simulations < 0 || simulations() < 1)
    throw std::invalid_argument("simulation counts must be non-negative with a positive total");
  if (renders < 1) throw std::invalid_argument("renders per simulation must be >= 1");
  if (output_size < 16 || output_size > render_size)
    throw std::invalid_argument("output_size must lie in [16, render_size]");
  if (!(fov_deg > 0.0 && fov_deg < 180.0)) throw std::invalid_argument("fov_deg must lie in (0, 180)");
  if (relax_seconds < 0.0) throw std::invalid_argument("relax_seconds must be non-negative");
}

DatasetConfig desk_dataset_config(sim::SceneKind kind) {
  DatasetConfig c;
  c.scene = sim::default_scene_file(kind);
  return c;
}

DatasetConfig full_dataset_config(sim::SceneKind kind) {
  DatasetConfig c = desk_dataset_config(kind);
  c.train_simulations = 1000;
  c.val_simulations = 150;
  c.test_simulations = 85;
  c.renders = 14;
  c.render_size = 300;
  c.output_size = 224;
  return c;
}

json to_json(const refine::SearchSpace& s) {
  json base = json::array();
  for (const auto& row : s.base) base.push_back(json(std::vector<double>(row.begin(), row.end())));
  return json{{"base_bending", base},
              {"log10_bending_multiplier", {s.log_multiplier_min, s.log_multiplier_max}},
              {"area_weight", {s.area_weight_min, s.area_weight_max}},
              {"wind_speed", {s.wind_min, s.wind_max}}};
}

refine::SearchSpace search_space_from_json(const json& j, const refine::SearchSpace& base) {
  refine::SearchSpace s = base;
  if (j.contains("base_bending"))
    s.base = sim::params_from_json(json{{"bending", j.at("base_bending")}, {"area_weight", 0.1},
                                        {"wind_speed", 0.0}})
                 .bend;
  read_range(j, "log10_bending_multiplier", s.log_multiplier_min, s.log_multiplier_max);
  read_range(j, "area_weight", s.area_weight_min, s.area_weight_max);
  read_range(j, "wind_speed", s.wind_min, s.wind_max);
  s.validate();
  return s;
}

json to_json(const DatasetConfig& c) {
  return json{{"scene", sim::to_json(c.scene)},
              {"search_space", to_json(c.space)},
              {"train_simulations", c.train_simulations},
              {"val_simulations", c.val_simulations},
              {"test_simulations", c.test_simulations},
              {"renders", c.renders},
              {"render_size", c.render_size},
              {"output_size", c.output_size},
              {"fov_deg", c.fov_deg},
              {"relax_seconds", c.relax_seconds}};
}

DatasetConfig dataset_config_from_json(const json& j, const DatasetConfig& base) {
  DatasetConfig c = base;
  if (j.contains("scene")) {
    const json& scene = j.at("scene");
    // A scene of another kind starts from that kind's defaults.
    if (scene.contains("scene") && scene.at("scene").get<std::string>() != sim::to_string(base.scene.scene.kind)) {
      c.scene = sim::scene_from_json(scene);
    } else {
      json merged = sim::to_json(base.scene);
      merged.merge_patch(scene);
      c.scene = sim::scene_from_json(merged);
    }
  }
  if (j.contains("search_space")) c.space = search_space_from_json(j.at("search_space"), base.space);
  read_opt(j, "train_simulations", c.train_simulations);
  read_opt(j, "val_simulations", c.val_simulations);
  read_opt(j, "test_simulations", c.test_simulations);
  read_opt(j, "renders", c.renders);
  read_opt(j, "render_size", c.render_size);
  read_opt(j, "output_size", c.output_size);
  read_opt(j, "fov_deg", c.fov_deg);
  read_opt(j, "relax_seconds", c.relax_seconds);
  c.validate();
  return c;
}

json to_json(const render::CameraParams& c) {
  return json{{"height", c.height},
              {"radius", c.radius},
              {"azimuth_deg", c.azimuth_deg},
              {"look_at", vec_to_json(c.look_at)},
              {"wind_direction", vec_to_json(c.wind_direction)},
              {"fov_deg", c.fov_deg},
              {"image_height", c.image_height},
              {"image_width", c.image_width}};
}

render::CameraParams camera_from_json(const json& j) {
  render::CameraParams c;
  read_opt(j, "height", c.height);
  read_opt(j, "radius", c.radius);
  read_opt(j, "azimuth_deg", c.azimuth_deg);
  if (j.contains("look_at")) c.look_at = vec_from_json(j.at("look_at"), "look_at");
  if (j.contains("wind_direction")) c.wind_direction = vec_from_json(j.at("wind_direction"), "wind_direction");
  read_opt(j, "fov_deg", c.fov_deg);
  read_opt(j, "image_height", c.image_height);
  read_opt(j, "image_width", c.image_width);
  return c;
}

json to_json(const render::RenderConfig& c) {
  return json{{"light_direction", vec_to_json(c.light_direction)},
              {"ambient", c.ambient},
              {"diffuse", c.diffuse},
              {"background_level", c.background_level},
              {"background_gradient", c.background_gradient},
              {"background_angle", c.background_angle},
              {"texture", c.texture == render::Texture::flat ? "flat" : "checkerboard"},
              {"checker_size", c.checker_size},
              {"checker_dark", c.checker_dark}};
}

render::RenderConfig render_config_from_json(const json& j) {
  render::RenderConfig c;
  if (j.contains("light_direction")) c.light_direction = vec_from_json(j.at("light_direction"), "light_direction");
  read_opt(j, "ambient", c.ambient);
  read_opt(j, "diffuse", c.diffuse);
  read_opt(j, "background_level", c.background_level);
  read_opt(j, "background_gradient", c.background_gradient);
  read_opt(j, "background_angle", c.background_angle);
  if (j.contains("texture")) {
    const std::string t = j.at("texture").get<std::string>();
    if (t == "flat") c.texture = render::Texture::flat;
    else if (t == "checkerboard") c.texture = render::Texture::checkerboard;
    else throw std::invalid_argument("unknown texture '" + t + "'");
  }
  read_opt(j, "checker_size", c.checker_size);
  read_opt(j, "checker_dark", c.checker_dark);
  c.validate();
  return c;
}

std::uint64_t theta_seed(std::uint64_t master, int sim_id) {
  return derive_seed({master, static_cast<std::uint64_t>(sim_id)});
}

std::uint64_t render_seed(std::uint64_t master, int sim_id, int render) {
  return derive_seed({master, static_cast<std::uint64_t>(sim_id), static_cast<std::uint64_t>(render)});
}

RenderSample sample_render(const DatasetConfig& c, std::uint64_t seed) {
  Rng rng(seed);
  RenderSample z;
  z.camera = render::sample_camera(rng, c.scene.scene.kind, refine::cloth_centroid(c.scene),
                                   c.scene.scene.wind_direction, c.fov_deg, c.render_size, c.render_size);
  z.look = render::sample_render_config(rng);
  return z;
}

refine::RenderSetup render_setup(const DatasetConfig& c, const RenderSample& zeta) {
  refine::RenderSetup s;
  s.scene = c.scene;
  s.camera = zeta.camera;
  s.look = zeta.look;
  s.render_size = c.render_size;
  s.output_size = c.output_size;
  s.relax_seconds = c.relax_seconds;
  return s;
}

GenerateReport generate(const DatasetConfig& c, std::uint64_t master_seed, const fs::path& root,
                        const ProgressCallback& on_sim) {
  c.validate();
  fs::create_directories(root);
  GenerateReport report;
  const sim::ClothMesh mesh = c.scene.build_mesh();
  json sims = json::array();

  for (int m = 0; m < c.simulations(); ++m) {
    const fs::path dir = root / sim_dir(m);
    fs::create_directories(dir);
    const std::uint64_t ts = theta_seed(master_seed, m);
    Rng rng(ts);
    const sim::ClothParams theta = c.space.sample(rng);

    json meta{{"sim", m}, {"split", to_string(c.split_of(m))}, {"theta_seed", ts},
              {"params", sim::params_to_json(theta)}, {"failed", false}, {"renders", json::array()}};
    std::vector<std::pair<fs::path, VideoVolume>> clips;
    try {
      sim::SimState start = mesh.state;
      if (c.relax_seconds > 0.0) start = sim::relax(start, mesh.topology, theta, c.scene.scene, c.relax_seconds);
      const sim::MeshSequence seq = sim::simulate(theta, mesh.topology, start, c.scene.scene);
      for (int r = 0; r < c.renders; ++r) {
        const std::uint64_t rs = render_seed(master_seed, m, r);
        const RenderSample z = sample_render(c, rs);
        VideoVolume v = render::resize_crop(render::render_sequence(seq, mesh.topology, z.camera, z.look),
                                            c.output_size, c.output_size);
        meta["renders"].push_back(json{{"index", r}, {"seed", rs}, {"file", render_file(r)},
                                       {"camera", to_json(z.camera)}, {"look", to_json(z.look)}});
        clips.emplace_back(fs::path(sim_dir(m)) / render_file(r), std::move(v));
      }
    } catch (const std::exception& e) {
      meta["failed"] = true;
      meta["error"] = e.what();
      meta["renders"] = json::array();
      clips.clear();
      report.failures.push_back(sim_dir(m) + ": " + e.what());
    }

    sim::write_json(dir / "params.json", sim::params_to_json(theta));
    report.files.push_back(fs::path(sim_dir(m)) / "params.json");
    for (const auto& [rel, v] : clips) {
      write_vvol(root / rel, v);
      report.files.push_back(rel);
    }
    sim::write_json(dir / "meta.json", meta);
    report.files.push_back(fs::path(sim_dir(m)) / "meta.json");
    sims.push_back(json{{"id", m}, {"split", to_string(c.split_of(m))}, {"failed", meta["failed"]}});
    if (on_sim) on_sim(m, !meta["failed"].get<bool>());
  }

  sim::write_json(root / "dataset.json",
                  json{{"format", "clothscope-dataset"}, {"version", 1}, {"seed", master_seed},
                       {"config", to_json(c)}, {"simulations", sims}});
  report.files.push_back("dataset.json");
  return report;
}

std::vector<Example> DatasetIndex::split(Split s) const {
  std::vector<Example> out;
  std::copy_if(examples.begin(), examples.end(), std::back_inserter(out),
               [s](const Example& e) { return e.split == s; });
  return out;
}

DatasetIndex load_dataset(const fs::path& root) {
  const fs::path index_path = root / "dataset.json";
  if (!fs::exists(index_path))
    throw std::runtime_error("no dataset at " + root.string() + " (missing " + index_path.string() + ")");
  const json index = sim::read_json(index_path);
  if (index.value("format", "") != "clothscope-dataset")
    throw std::runtime_error(index_path.string() + " is not a dataset index");

  DatasetIndex d;
  d.root = fs::absolute(root);
  d.seed = index.at("seed").get<std::uint64_t>();
  d.config = dataset_config_from_json(index.at("config"), desk_dataset_config());

  std::set<int> seen;
  for (const json& s : index.at("simulations")) {
    const int id = s.at("id").get<int>();
    const Split split = split_from_string(s.at("split").get<std::string>());
    if (!seen.insert(id).second)
      throw std::runtime_error(index_path.string() + ": simulation " + std::to_string(id) + " listed twice");
    if (split != d.config.split_of(id))
      throw std::runtime_error(index_path.string() + ": simulation " + std::to_string(id) +
                               " is in the wrong split");
    const fs::path dir = d.root / sim_dir(id);
    const json meta = sim::read_json(dir / "meta.json");
    if (meta.at("sim").get<int>() != id || split_from_string(meta.at("split").get<std::string>()) != split)
      throw std::runtime_error((dir / "meta.json").string() + " disagrees with " + index_path.string());
    if (meta.at("failed").get<bool>()) continue;

    const sim::ClothParams theta = sim::params_from_json(sim::read_json(dir / "params.json"));
    if (sim::params_to_json(theta) != meta.at("params"))
      throw std::runtime_error((dir / "meta.json").string() + ": parameters differ from params.json");
    for (const json& r : meta.at("renders")) {
      Example e;
      e.sim = id;
      e.render = r.at("index").get<int>();
      e.split = split;
      e.params = theta;
      e.zeta.camera = camera_from_json(r.at("camera"));
      e.zeta.look = render_config_from_json(r.at("look"));
      e.file = dir / r.at("file").get<std::string>();
      if (!fs::exists(e.file)) throw std::runtime_error("missing render " + e.file.string());
      d.examples.push_back(std::move(e));
    }
  }
  return d;
}

std::vector<embed::LabeledClip> load_clips(const std::vector<Example>& examples) {
  std::vector<embed::LabeledClip> out;
  out.reserve(examples.size());
  for (const Example& e : examples) out.push_back({read_vvol(e.file), e.sim});
  return out;
}

}  // namespace clothscope::data
