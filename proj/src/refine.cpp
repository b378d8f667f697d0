#include "clothscope/refine.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "clothscope/train.hpp"

namespace clothscope::refine {

namespace {

double to_unit(double v, double lo, double hi) { return 2.0 * (v - lo) / (hi - lo) - 1.0; }
double from_unit(double z, double lo, double hi) { return lo + 0.5 * (z + 1.0) * (hi - lo); }

double clamp_logged(double v, double lo, double hi, const std::string& what,
                    std::vector<std::string>* warnings) {
  if (v >= lo && v <= hi) return v;
  const double c = std::clamp(v, lo, hi);
  if (warnings) {
    std::ostringstream msg;
    msg << what << " = " << v << " outside [" << lo << ", " << hi << "], clamped to " << c;
    warnings->push_back(msg.str());
  }
  return c;
}

}  // namespace

void SearchSpace::validate() const {
  for (const auto& row : base)
    for (double b : row)
      if (!(b > 0.0)) throw std::invalid_argument("base bending grid must be positive");
  if (!(log_multiplier_max > log_multiplier_min) || !(area_weight_max > area_weight_min) ||
      !(wind_max > wind_min))
    throw std::invalid_argument("search-space bounds must be increasing");
}

Eigen::VectorXd SearchSpace::normalize(const ClothParams& p, std::vector<std::string>* warnings) const {
  Eigen::VectorXd z(kDim);
  int k = 0;
  for (int d = 0; d < sim::kBendDirections; ++d)
    for (int s = 0; s < sim::kBendSamples; ++s, ++k) {
      const double m = std::log10(p.bend[d][s] / base[d][s]);
      z[k] = to_unit(clamp_logged(m, log_multiplier_min, log_multiplier_max,
                                  "log10 bending multiplier " + std::to_string(k), warnings),
                     log_multiplier_min, log_multiplier_max);
    }
  z[k++] = to_unit(clamp_logged(p.area_weight, area_weight_min, area_weight_max, "area weight", warnings),
                   area_weight_min, area_weight_max);
  z[k++] = to_unit(clamp_logged(p.wind_speed, wind_min, wind_max, "wind speed", warnings), wind_min,
                   wind_max);
  return z;
}

ClothParams SearchSpace::denormalize(const Eigen::VectorXd& zin) const {
  if (zin.size() != kDim)
    throw std::invalid_argument("expected a " + std::to_string(kDim) + "-d point, got " +
                                std::to_string(zin.size()));
  const Eigen::VectorXd z = zin.cwiseMax(-1.0).cwiseMin(1.0);
  ClothParams p;
  int k = 0;
  for (int d = 0; d < sim::kBendDirections; ++d)
    for (int s = 0; s < sim::kBendSamples; ++s, ++k)
      p.bend[d][s] = base[d][s] * std::pow(10.0, from_unit(z[k], log_multiplier_min, log_multiplier_max));
  p.area_weight = from_unit(z[k++], area_weight_min, area_weight_max);
  p.wind_speed = from_unit(z[k++], wind_min, wind_max);
  return p;
}

ClothParams SearchSpace::sample(Rng& rng) const {
  Eigen::VectorXd z(kDim);
  for (int k = 0; k < kDim; ++k) z[k] = rng.uniform(-1.0, 1.0);
  return denormalize(z);
}

void RenderSetup::validate() const {
  scene.validate();
  look.validate();
  camera.validate(scene.scene.kind);
  if (camera.image_height != render_size || camera.image_width != render_size)
    throw std::invalid_argument("camera resolution must equal render_size");
  if (output_size < 16 || output_size > render_size)
    throw std::invalid_argument("output_size must lie in [16, render_size]");
  if (relax_seconds < 0.0) throw std::invalid_argument("relax_seconds must be non-negative");
}

sim::Vec3 cloth_centroid(const sim::SceneFile& scene) {
  const sim::ClothMesh mesh = scene.build_mesh();
  sim::Vec3 c = sim::Vec3::Zero();
  for (const auto& p : mesh.state.positions) c += p;
  return c / static_cast<double>(mesh.state.positions.size());
}

VideoVolume simulate_and_render(const ClothParams& params, const RenderSetup& setup) {
  const sim::ClothMesh mesh = setup.scene.build_mesh();
  sim::SimState start = mesh.state;
  if (setup.relax_seconds > 0.0)
    start = sim::relax(start, mesh.topology, params, setup.scene.scene, setup.relax_seconds);
  const sim::MeshSequence seq = sim::simulate(params, mesh.topology, start, setup.scene.scene);
  const VideoVolume full = render::render_sequence(seq, mesh.topology, setup.camera, setup.look);
  return render::resize_crop(full, setup.output_size, setup.output_size);
}

RefineResult refine(const VideoVolume& target, const embed::Checkpoint& ckpt, const SearchSpace& space,
                    const RenderSetup& setup, const RefineOptions& options,
                    const RecordCallback& on_record) {
  space.validate();
  setup.validate();
  embed::TrainConfig protocol;
  protocol.clip_frames = ckpt.clip_frames;
  protocol.eval_offset = ckpt.eval_offset;

  RefineResult result;
  result.target_embedding = embed::embed_clip(ckpt.model, target, protocol);

  auto objective = [&](const Eigen::VectorXd& x) {
    const ClothParams p = space.denormalize(x);
    const VideoVolume clip = simulate_and_render(p, setup);
    return embed::pairwise_distance(embed::embed_clip(ckpt.model, clip, protocol),
                                    result.target_embedding);
  };

  bo::MinimizeOptions mo;
  mo.budget = options.budget;
  mo.seed = options.seed;
  mo.gp = options.gp;
  mo.propose = options.propose;

  const bo::MinimizeResult r = bo::minimize(objective, SearchSpace::kDim, mo, [&](const bo::Evaluation& e) {
    RefineRecord rec;
    rec.iteration = e.iteration;
    rec.x = e.x;
    rec.params = space.denormalize(e.x);
    rec.d2 = e.value;
    rec.best_d2 = e.best;
    rec.failed = e.failed;
    rec.wall_s = e.wall_s;
    result.records.push_back(rec);
    if (on_record) on_record(rec);
  });
  result.best_index = r.best_index;
  result.budget_used = static_cast<int>(r.history.size());
  return result;
}

std::string history_header() {
  std::string h = "iter,d2,best_d2,v_w,rho_A";
  for (int k = 0; k < sim::kBendDirections * sim::kBendSamples; ++k) h += ",bend_" + std::to_string(k);
  return h + ",wall_s";
}

std::string history_row(const RefineRecord& r) {
  std::ostringstream os;
  os << std::setprecision(17) << r.iteration << ',' << r.d2 << ',' << r.best_d2 << ','
     << r.params.wind_speed << ',' << r.params.area_weight;
  for (const auto& row : r.params.bend)
    for (double b : row) os << ',' << b;
  os << ',' << std::setprecision(6) << r.wall_s;
  return os.str();
}

HistoryWriter::HistoryWriter(const std::filesystem::path& path) : path_(path), out_(path) {
  if (!out_) throw std::runtime_error("cannot write " + path.string());
  out_ << history_header() << '\n' << std::flush;
}

void HistoryWriter::append(const RefineRecord& r) {
  out_ << history_row(r) << '\n' << std::flush;
  if (!out_) throw std::runtime_error("write failed for " + path_.string());
}

}  // namespace clothscope::refine
