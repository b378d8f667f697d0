#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "clothscope/bayesopt.hpp"
#include "clothscope/dataset.hpp"
#include "clothscope/network.hpp"
#include "clothscope/train.hpp"

namespace clothscope::cli {

enum class Command { gen, train, eval, refine, sim };

std::string to_string(Command c);
Command command_from_string(const std::string& s);

struct RunSpec {
  Command command = Command::gen;
  std::optional<std::filesystem::path> config;
  std::filesystem::path out;
  std::uint64_t seed = 0;
  bool desk = false;
  std::optional<int> budget;                            // refine
  std::optional<std::filesystem::path> dataset;         // train, eval
  std::optional<std::filesystem::path> checkpoint;      // eval, refine
  std::optional<std::filesystem::path> target;          // refine: target VVOL
  std::optional<std::filesystem::path> target_meta;     // refine: JSON with "camera" and "look"
};

struct EvalSettings {
  int max_triplets = 0;  // 0 keeps every test triplet
  double ridge = 1e-6;   // negative: leave-one-out grid search
  int pca_components = 50;
};

struct RefineSettings {
  int budget = 50;
  double target_wind_speed = 5.0;  // synthetic self-target
  bo::GpFitOptions gp;
  bo::ProposeOptions propose;
};

struct SimSettings {
  std::optional<sim::ClothParams> params;  // default: centre of the search space
  double wind_speed = 5.0;                 // used with the default parameters
  std::optional<data::RenderSample> zeta;  // default: drawn from the run seed
};

/// The effective configuration of a run: a preset overlaid with the
/// config file. Sections: "dataset", "model", "train", "eval", "refine",
/// "sim".
struct Settings {
  data::DatasetConfig dataset;
  embed::ModelConfig model;
  embed::TrainConfig train;
  EvalSettings eval;
  RefineSettings refine;
  SimSettings sim;
};

/// Desk scale: 40 simulations x 4 renders, 64x64 inputs, N_t = 30,
/// D_e = 64, two blocks. Full scale: 1000/150/85 simulations, 14 renders,
/// 224x224 inputs, D_e = 512, three blocks.
Settings preset(bool desk);
Settings settings_from_json(const nlohmann::json& j, const Settings& base);
nlohmann::json to_json(const Settings& s);
/// Preset, then the config file, then --budget.
Settings resolve_settings(const RunSpec& spec);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);
/// Digest of a CSV with one column removed, for files carrying wall-clock
/// timings.
std::string sha256_csv_without(const std::filesystem::path& path, const std::string& column);

/// Runs one command. Artifacts are staged in "<out>.partial" and renamed to
/// `out` once the manifest is written; on failure the staging directory is
/// left in place and the error names it. Returns the manifest.
nlohmann::json run(const RunSpec& spec, std::ostream& log);

}  // namespace clothscope::cli
