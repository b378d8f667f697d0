#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "clothscope/bayesopt.hpp"
#include "clothscope/checkpoint.hpp"
#include "clothscope/clothsim.hpp"
#include "clothscope/metric.hpp"
#include "clothscope/render.hpp"
#include "clothscope/rng.hpp"
#include "clothscope/scene_io.hpp"
#include "clothscope/video.hpp"

namespace clothscope::refine {

using sim::ClothParams;

/// 17-d box: bending multipliers over a base grid in [10^-1, 10] (log10
/// scaled), area weight and wind speed (affine). Normalised coordinates
/// live in [-1, 1]; order is bend[0][0..4], bend[1][..], bend[2][..],
/// area_weight, wind_speed.
struct SearchSpace {
  static constexpr int kDim = static_cast<int>(ClothParams::kDim);

  sim::BendGrid base = sim::default_base_bending();
  double log_multiplier_min = -1.0;
  double log_multiplier_max = 1.0;
  double area_weight_min = 0.10, area_weight_max = 0.17;
  double wind_min = 0.0, wind_max = 10.0;

  /// Out-of-range values are clamped; each clamp appends a message to
  /// `warnings` when given.
  Eigen::VectorXd normalize(const ClothParams& p, std::vector<std::string>* warnings = nullptr) const;
  /// Inputs outside [-1, 1] are clamped.
  ClothParams denormalize(const Eigen::VectorXd& z) const;
  ClothParams center() const { return denormalize(Eigen::VectorXd::Zero(kDim)); }
  /// Uniform in normalised coordinates.
  ClothParams sample(Rng& rng) const;
  void validate() const;
};

/// Fixed scene and render settings zeta for turning parameters into a clip.
struct RenderSetup {
  sim::SceneFile scene;
  render::CameraParams camera;  // image size = render_size
  render::RenderConfig look;
  int render_size = 80;
  int output_size = 64;
  double relax_seconds = 3.0;

  void validate() const;
};

/// Look-at point at the rest centroid of the scene's cloth.
sim::Vec3 cloth_centroid(const sim::SceneFile& scene);

/// Relaxes the cloth under `params`, simulates the configured frames,
/// renders and centre-crops to output_size. Throws sim::SimulationError.
VideoVolume simulate_and_render(const ClothParams& params, const RenderSetup& setup);

struct RefineOptions {
  int budget = 50;
  std::uint64_t seed = 0;
  bo::GpFitOptions gp;
  bo::ProposeOptions propose;
};

struct RefineRecord {
  int iteration = 0;
  Eigen::VectorXd x;  // normalised
  ClothParams params;
  double d2 = 0.0;
  double best_d2 = 0.0;
  bool failed = false;
  double wall_s = 0.0;
};

struct RefineResult {
  std::vector<RefineRecord> records;
  int best_index = 0;
  int budget_used = 0;
  embed::Embedding target_embedding;

  const RefineRecord& best() const { return records.at(static_cast<std::size_t>(best_index)); }
};

using RecordCallback = std::function<void(const RefineRecord&)>;

/// Embeds the target once, then runs the GP/EI loop: denormalise,
/// simulate, render, embed and score each point by squared embedding
/// distance to the target.
RefineResult refine(const VideoVolume& target, const embed::Checkpoint& model, const SearchSpace& space,
                    const RenderSetup& setup, const RefineOptions& options,
                    const RecordCallback& on_record = {});

/// Appends one CSV row per record and flushes, so an interrupted run
/// leaves a valid prefix. Columns: iter, d2, best_d2, v_w, rho_A,
/// bend_0..bend_14, wall_s.
class HistoryWriter {
 public:
  explicit HistoryWriter(const std::filesystem::path& path);
  void append(const RefineRecord& r);

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

std::string history_header();
std::string history_row(const RefineRecord& r);

}  // namespace clothscope::refine
