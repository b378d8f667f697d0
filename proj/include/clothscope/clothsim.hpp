#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace clothscope::sim {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

inline constexpr int kBendDirections = 3;  // warp (0 deg), bias (45 deg), weft (90 deg)
inline constexpr int kBendSamples = 5;

using BendGrid = std::array<std::array<double, kBendSamples>, kBendDirections>;

/// Physical parameters: 15 bending stiffness samples, area weight and wind
/// speed. The flat ordering used everywhere else is bend[0][0..4],
/// bend[1][0..4], bend[2][0..4], area_weight, wind_speed.
struct ClothParams {
  static constexpr std::size_t kDim = kBendDirections * kBendSamples + 2;

  BendGrid bend{};
  double area_weight = 0.135;  // kg/m^2
  double wind_speed = 0.0;     // m/s

  std::array<double, kDim> flatten() const;
  static ClothParams unflatten(const std::array<double, kDim>& v);
  /// Throws std::invalid_argument on non-positive stiffness or mass.
  void validate() const;
};

/// Base bending grid used when no material file is supplied.
BendGrid default_base_bending();

enum class SceneKind { flag, hanging };

const char* to_string(SceneKind kind);
SceneKind scene_kind_from_string(const std::string& s);

/// Temporal wind fluctuation riding on the mean flow. Crossflow (flag) or
/// streamwise (hanging) velocity of amplitude gust_ratio * v_w travelling
/// downstream at convection_ratio * v_w with frequency shedding_per_metre * v_w.
struct WakeModel {
  double gust_ratio = 0.8;
  double shedding_per_metre = 0.8;  // Hz per (m/s)
  double convection_ratio = 0.6;
};

struct SceneConfig {
  SceneKind kind = SceneKind::flag;
  Vec3 wind_direction{1.0, 0.0, 0.0};
  Vec3 gravity{0.0, 0.0, -9.81};
  double drag = 0.6;             // kg/(m^2 s), Stokes coefficient per unit area
  double k_struct = 40.0;        // N/m
  double k_shear = 10.0;         // N/m
  double spring_damping = 0.2;   // kg/s
  double damping = 0.05;         // 1/s, global velocity damping
  double dt = 1e-3;              // s
  double frame_dt = 0.04;        // s
  int frames = 60;
  double bend_alpha_step = 5.0;  // spacing of the alpha samples, 1/m^2
  WakeModel wake;

  int substeps_per_frame() const;
  /// Throws std::invalid_argument when dt does not divide frame_dt, the wind
  /// direction is not unit length, or a coefficient is out of range.
  void validate() const;
};

SceneConfig default_scene(SceneKind kind);

struct Spring {
  int i = 0;
  int j = 0;
  double rest_length = 0.0;
};

/// Two triangles (x1, x3, x4) and (x2, x4, x3) hinged on the edge x3-x4.
struct BendElement {
  std::array<int, 4> v{};    // x1, x2, x3, x4
  double rest_angle = 0.0;   // rad
  double edge_angle = 0.0;   // rad, direction of x3->x4 in material space
};

struct ClothTopology {
  std::vector<Vec2> rest_uv;
  std::vector<std::array<int, 3>> triangles;
  std::vector<Spring> structural;
  std::vector<Spring> shear;
  std::vector<BendElement> bends;
  std::vector<int> pinned;
  std::vector<char> is_pinned;
  std::vector<double> lumped_area;

  std::size_t vertex_count() const { return rest_uv.size(); }
  double total_area() const;
};

struct SimState {
  std::vector<Vec3> positions;
  std::vector<Vec3> velocities;
  double time = 0.0;
};

struct ClothMesh {
  ClothTopology topology;
  SimState state;
};

struct MeshSequence {
  double frame_dt = 0.04;
  std::vector<std::vector<Vec3>> frames;
};

struct SimulationError : std::runtime_error {
  SimulationError(const std::string& what, int frame, int substep, int vertex)
      : std::runtime_error(what), frame(frame), substep(substep), vertex(vertex) {}
  int frame;
  int substep;
  int vertex;
};

/// Regular nx-by-ny vertex grid in the vertical x-z plane, top edge at
/// top_z, left column pinned to the pole. Carries a 1 mm out-of-plane
/// ripple so that the symmetric in-plane state is broken.
ClothMesh build_flag_mesh(int nx, int ny, double width, double height, double top_z = 4.6);

/// Same grid with the top row pinned to a rod along x, centred at x = 0.
ClothMesh build_hanging_mesh(int nx, int ny, double width, double height, double top_z = 2.0);

/// Piecewise-linear stiffness over the alpha samples, blended across the
/// warp/bias/weft directions by the material-space edge angle.
double bending_stiffness(double alpha, double edge_angle, const ClothParams& params,
                         double alpha_step);

struct BendElementForces {
  std::array<Vec3, 4> force{};
  double dihedral = 0.0;  // signed, rad
  double alpha = 0.0;     // |sin(phi/2)| / (|N1| + |N2|)
  bool degenerate = false;
};

/// Forces of one hinge for a given stiffness. Degenerate hinges (either
/// area-weighted normal below 1e-12) return zero forces.
BendElementForces bend_element_forces(const std::array<Vec3, 4>& x, double rest_angle,
                                      double stiffness);

using Forces = std::vector<Vec3>;

void add_bending_forces(const SimState& state, const ClothTopology& topo, const ClothParams& params,
                        double alpha_step, Forces& out);
void add_stretch_shear_forces(const SimState& state, const ClothTopology& topo,
                              const SceneConfig& config, Forces& out);
void add_external_forces(const SimState& state, const ClothTopology& topo,
                         const ClothParams& params, const SceneConfig& config, Forces& out);

Forces bending_forces(const SimState& state, const ClothTopology& topo, const ClothParams& params,
                      double alpha_step);
Forces stretch_shear_forces(const SimState& state, const ClothTopology& topo,
                            const SceneConfig& config);
Forces external_forces(const SimState& state, const ClothTopology& topo, const ClothParams& params,
                       const SceneConfig& config);

/// Air velocity at point p and time t.
Vec3 wind_velocity(const Vec3& p, double t, const ClothParams& params, const SceneConfig& config);

/// Advances by one frame (frame_dt) with semi-implicit Euler substeps.
/// `frame_index` only labels diagnostics.
SimState step(SimState state, const ClothTopology& topo, const ClothParams& params,
              const SceneConfig& config, int frame_index = 0);

/// config.frames positions, frame 0 being the initial state.
MeshSequence simulate(const ClothParams& params, const ClothTopology& topo,
                      const SimState& initial, const SceneConfig& config);

/// Integrates with heavy damping until the cloth settles; time is reset to 0.
SimState relax(SimState state, const ClothTopology& topo, const ClothParams& params,
               const SceneConfig& config, double seconds = 30.0, double damping = 4.0);

double kinetic_energy(const SimState& state, const ClothTopology& topo, double area_weight);
double spring_energy(const SimState& state, const ClothTopology& topo, const SceneConfig& config);

void write_obj(std::ostream& os, const std::vector<Vec3>& positions, const ClothTopology& topo);

}  // namespace clothscope::sim
