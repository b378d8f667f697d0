#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "clothscope/refine.hpp"
#include "clothscope/render.hpp"
#include "clothscope/scene_io.hpp"
#include "clothscope/train.hpp"

namespace clothscope::data {

enum class Split { train, val, test };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

/// Simulation ids are assigned to splits in order: the first
/// train_simulations ids train, the next val_simulations validate, the rest
/// test.
struct DatasetConfig {
  sim::SceneFile scene = sim::default_scene_file(sim::SceneKind::flag);
  refine::SearchSpace space;
  int train_simulations = 26;
  int val_simulations = 4;
  int test_simulations = 10;
  int renders = 4;          // per simulation
  int render_size = 80;     // rasterised square, px
  int output_size = 64;     // after the centre crop and resample
  double fov_deg = 30.0;
  double relax_seconds = 3.0;

  int simulations() const { return train_simulations + val_simulations + test_simulations; }
  Split split_of(int sim_id) const;
  void validate() const;
};

DatasetConfig desk_dataset_config(sim::SceneKind kind = sim::SceneKind::flag);
DatasetConfig full_dataset_config(sim::SceneKind kind = sim::SceneKind::flag);

nlohmann::json to_json(const DatasetConfig& c);
/// Keys absent from `j` keep the values of `base`.
DatasetConfig dataset_config_from_json(const nlohmann::json& j, const DatasetConfig& base);

nlohmann::json to_json(const refine::SearchSpace& s);
refine::SearchSpace search_space_from_json(const nlohmann::json& j, const refine::SearchSpace& base);

nlohmann::json to_json(const render::CameraParams& c);
render::CameraParams camera_from_json(const nlohmann::json& j);
nlohmann::json to_json(const render::RenderConfig& c);
render::RenderConfig render_config_from_json(const nlohmann::json& j);

/// Per-task streams: theta of simulation m from (master, m), camera and
/// lighting of render r from (master, m, r).
std::uint64_t theta_seed(std::uint64_t master, int sim_id);
std::uint64_t render_seed(std::uint64_t master, int sim_id, int render);

/// The render settings zeta of one example.
struct RenderSample {
  render::CameraParams camera;
  render::RenderConfig look;
};

RenderSample sample_render(const DatasetConfig& c, std::uint64_t seed);
refine::RenderSetup render_setup(const DatasetConfig& c, const RenderSample& zeta);

struct GenerateReport {
  std::vector<std::filesystem::path> files;  // relative to the dataset root, in write order
  std::vector<std::string> failures;         // one message per failed simulation
};

using ProgressCallback = std::function<void(int sim_id, bool ok)>;

/// Writes <root>/dataset.json, and per simulation sim_<m>/params.json,
/// sim_<m>/meta.json and sim_<m>/render_<r>.vvol. A simulation that throws
/// is recorded in meta.json and the report; generation continues.
GenerateReport generate(const DatasetConfig& c, std::uint64_t master_seed, const std::filesystem::path& root,
                        const ProgressCallback& on_sim = {});

struct Example {
  int sim = 0;
  int render = 0;
  Split split = Split::train;
  sim::ClothParams params;
  RenderSample zeta;
  std::filesystem::path file;  // absolute
};

struct DatasetIndex {
  std::filesystem::path root;
  DatasetConfig config;
  std::uint64_t seed = 0;
  std::vector<Example> examples;  // failed simulations are absent

  std::vector<Example> split(Split s) const;
};

/// Errors name the offending path. Checks that every simulation id belongs
/// to exactly one split and that all renders of a simulation share theta.
DatasetIndex load_dataset(const std::filesystem::path& root);

std::vector<embed::LabeledClip> load_clips(const std::vector<Example>& examples);

}  // namespace clothscope::data
