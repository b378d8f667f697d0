#include "clothscope/clothsim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>
#include <utility>

namespace clothscope::sim {

std::array<double, ClothParams::kDim> ClothParams::flatten() const {
  std::array<double, kDim> v{};
  std::size_t k = 0;
  for (const auto& row : bend)
    for (double b : row) v[k++] = b;
  v[k++] = area_weight;
  v[k++] = wind_speed;
  return v;
}

ClothParams ClothParams::unflatten(const std::array<double, kDim>& v) {
  ClothParams p;
  std::size_t k = 0;
  for (auto& row : p.bend)
    for (double& b : row) b = v[k++];
  p.area_weight = v[k++];
  p.wind_speed = v[k++];
  return p;
}

void ClothParams::validate() const {
  for (const auto& row : bend)
    for (double b : row)
      if (!(b > 0.0) || !std::isfinite(b))
        throw std::invalid_argument("bending stiffness must be positive and finite");
  if (!(area_weight > 0.0) || !std::isfinite(area_weight))
    throw std::invalid_argument("area weight must be positive");
  if (!(wind_speed >= 0.0) || !std::isfinite(wind_speed))
    throw std::invalid_argument("wind speed must be non-negative");
}

BendGrid default_base_bending() {
  BendGrid g;
  for (auto& row : g) row.fill(1e-5);
  return g;
}

const char* to_string(SceneKind kind) { return kind == SceneKind::flag ? "flag" : "hanging"; }

SceneKind scene_kind_from_string(const std::string& s) {
  if (s == "flag") return SceneKind::flag;
  if (s == "hanging") return SceneKind::hanging;
  throw std::invalid_argument("unknown scene kind '" + s + "' (expected flag or hanging)");
}

int SceneConfig::substeps_per_frame() const {
  return static_cast<int>(std::lround(frame_dt / dt));
}

void SceneConfig::validate() const {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  if (!(frame_dt > 0.0)) throw std::invalid_argument("frame_dt must be positive");
  const double ratio = frame_dt / dt;
  if (std::lround(ratio) < 1 || std::abs(ratio - std::round(ratio)) > 1e-9 * ratio)
    throw std::invalid_argument("dt must divide frame_dt");
  if (std::abs(wind_direction.norm() - 1.0) > 1e-12)
    throw std::invalid_argument("wind direction must be a unit vector");
  if (kind == SceneKind::hanging && wind_direction.z() != 0.0)
    throw std::invalid_argument("hanging-cloth wind must lie in the horizontal plane");
  if (frames < 1) throw std::invalid_argument("frame count must be at least 1");
  if (drag < 0.0 || k_struct < 0.0 || k_shear < 0.0 || spring_damping < 0.0 || damping < 0.0)
    throw std::invalid_argument("force coefficients must be non-negative");
  if (damping * dt >= 1.0) throw std::invalid_argument("damping * dt must be below 1");
  if (!(bend_alpha_step > 0.0)) throw std::invalid_argument("bend_alpha_step must be positive");
}

SceneConfig default_scene(SceneKind kind) {
  SceneConfig c;
  c.kind = kind;
  if (kind == SceneKind::hanging) {
    c.wind_direction = Vec3(0.0, 1.0, 0.0);
    c.wake.gust_ratio = 0.5;
  }
  return c;
}

double ClothTopology::total_area() const {
  double a = 0.0;
  for (double x : lumped_area) a += x;
  return a;
}

namespace {

double uv_area(const Vec2& a, const Vec2& b, const Vec2& c) {
  const Vec2 ab = b - a;
  const Vec2 ac = c - a;
  return 0.5 * std::abs(ab.x() * ac.y() - ab.y() * ac.x());
}

ClothTopology grid_topology(int nx, int ny, double width, double height) {
  if (nx < 2 || ny < 2) throw std::invalid_argument("grid needs at least 2x2 vertices");
  if (!(width > 0.0) || !(height > 0.0))
    throw std::invalid_argument("cloth dimensions must be positive");

  ClothTopology t;
  const double du = width / (nx - 1);
  const double dv = height / (ny - 1);
  auto id = [nx](int i, int j) { return j * nx + i; };

  t.rest_uv.resize(static_cast<std::size_t>(nx) * ny);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) t.rest_uv[id(i, j)] = Vec2(i * du, j * dv);

  auto spring = [&](int a, int b) {
    return Spring{a, b, (t.rest_uv[b] - t.rest_uv[a]).norm()};
  };

  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      if (i + 1 < nx) t.structural.push_back(spring(id(i, j), id(i + 1, j)));
      if (j + 1 < ny) t.structural.push_back(spring(id(i, j), id(i, j + 1)));
    }

  for (int j = 0; j + 1 < ny; ++j)
    for (int i = 0; i + 1 < nx; ++i) {
      const int a = id(i, j), b = id(i + 1, j), c = id(i, j + 1), d = id(i + 1, j + 1);
      t.shear.push_back(spring(a, d));
      t.shear.push_back(spring(b, c));
      // Counter-clockwise in (u, v); the diagonal alternates per cell.
      if ((i + j) % 2 == 0) {
        t.triangles.push_back({a, b, d});
        t.triangles.push_back({a, d, c});
      } else {
        t.triangles.push_back({a, b, c});
        t.triangles.push_back({b, d, c});
      }
    }

  t.lumped_area.assign(t.rest_uv.size(), 0.0);
  for (const auto& tri : t.triangles) {
    const double a = uv_area(t.rest_uv[tri[0]], t.rest_uv[tri[1]], t.rest_uv[tri[2]]);
    for (int v : tri) t.lumped_area[v] += a / 3.0;
  }

  // Hinges: every directed edge a->b whose reverse b->a belongs to another triangle.
  std::map<std::pair<int, int>, int> opposite;
  for (const auto& tri : t.triangles)
    for (int k = 0; k < 3; ++k) opposite[{tri[k], tri[(k + 1) % 3]}] = tri[(k + 2) % 3];
  for (const auto& [edge, x1] : opposite) {
    const auto [a, b] = edge;
    if (a > b) continue;
    const auto rev = opposite.find({b, a});
    if (rev == opposite.end()) continue;
    BendElement e;
    e.v = {x1, rev->second, a, b};
    const Vec2 d = t.rest_uv[b] - t.rest_uv[a];
    e.edge_angle = std::atan2(d.y(), d.x());
    e.rest_angle = 0.0;
    t.bends.push_back(e);
  }
  t.is_pinned.assign(t.rest_uv.size(), 0);
  return t;
}

void pin(ClothTopology& t, int v) {
  t.pinned.push_back(v);
  t.is_pinned[v] = 1;
}

}  // namespace

ClothMesh build_flag_mesh(int nx, int ny, double width, double height, double top_z) {
  ClothMesh m;
  m.topology = grid_topology(nx, ny, width, height);
  auto& t = m.topology;
  m.state.positions.resize(t.vertex_count());
  m.state.velocities.assign(t.vertex_count(), Vec3::Zero());
  for (std::size_t k = 0; k < t.vertex_count(); ++k) {
    const Vec2& uv = t.rest_uv[k];
    const double ripple = 1e-3 * std::sin(std::numbers::pi * uv.x() / width) *
                          std::cos(2.0 * std::numbers::pi * uv.y() / height);
    m.state.positions[k] = Vec3(uv.x(), ripple, top_z - uv.y());
  }
  for (int j = 0; j < ny; ++j) pin(t, j * nx);
  return m;
}

ClothMesh build_hanging_mesh(int nx, int ny, double width, double height, double top_z) {
  ClothMesh m;
  m.topology = grid_topology(nx, ny, width, height);
  auto& t = m.topology;
  m.state.positions.resize(t.vertex_count());
  m.state.velocities.assign(t.vertex_count(), Vec3::Zero());
  for (std::size_t k = 0; k < t.vertex_count(); ++k) {
    const Vec2& uv = t.rest_uv[k];
    m.state.positions[k] = Vec3(uv.x() - 0.5 * width, 0.0, top_z - uv.y());
  }
  for (int i = 0; i < nx; ++i) pin(t, i);
  return m;
}

double bending_stiffness(double alpha, double edge_angle, const ClothParams& params,
                         double alpha_step) {
  // NaN propagates so that the integrator's finiteness check reports it.
  if (std::isnan(alpha) || std::isnan(edge_angle)) return std::numeric_limits<double>::quiet_NaN();
  double s = std::clamp(alpha / alpha_step, 0.0, static_cast<double>(kBendSamples - 1));
  const int si = std::min(static_cast<int>(s), kBendSamples - 2);
  s -= si;

  // Fold into [0, pi/2]: an edge and its reverse, and mirror images about
  // the warp axis, share a stiffness.
  double a = std::fmod(std::abs(edge_angle), std::numbers::pi);
  if (a > 0.5 * std::numbers::pi) a = std::numbers::pi - a;
  double d = a / (0.25 * std::numbers::pi);
  const int di = std::min(static_cast<int>(d), kBendDirections - 2);
  d -= di;

  auto along = [&](int dir) {
    return (1.0 - s) * params.bend[dir][si] + s * params.bend[dir][si + 1];
  };
  return (1.0 - d) * along(di) + d * along(di + 1);
}

BendElementForces bend_element_forces(const std::array<Vec3, 4>& x, double rest_angle,
                                      double stiffness) {
  BendElementForces out;
  for (auto& f : out.force) f.setZero();

  const Vec3 e = x[3] - x[2];
  const Vec3 n1 = (x[0] - x[2]).cross(x[0] - x[3]);
  const Vec3 n2 = (x[1] - x[3]).cross(x[1] - x[2]);
  const double elen = e.norm();
  const double a1 = n1.norm();
  const double a2 = n2.norm();
  if (a1 < 1e-12 || a2 < 1e-12 || elen < 1e-12) {
    out.degenerate = true;
    return out;
  }

  const Vec3 n1h = n1 / a1;
  const Vec3 n2h = n2 / a2;
  const double cos_phi = std::clamp(n1h.dot(n2h), -1.0, 1.0);
  const double sin_phi = n1h.cross(n2h).dot(e) / elen;
  const double phi = std::atan2(sin_phi, cos_phi);
  out.dihedral = phi;
  out.alpha = std::abs(std::sin(0.5 * phi)) / (a1 + a2);

  const Vec3 w1 = n1 / (a1 * a1);
  const Vec3 w2 = n2 / (a2 * a2);
  const Vec3 u1 = elen * w1;
  const Vec3 u2 = elen * w2;
  const Vec3 u3 = (x[0] - x[3]).dot(e) / elen * w1 + (x[1] - x[3]).dot(e) / elen * w2;
  const Vec3 u4 = -(x[0] - x[2]).dot(e) / elen * w1 - (x[1] - x[2]).dot(e) / elen * w2;

  const double coef =
      stiffness * elen * elen / (a1 + a2) * std::sin(0.5 * phi - 0.5 * rest_angle);
  out.force = {coef * u1, coef * u2, coef * u3, coef * u4};
  return out;
}

void add_bending_forces(const SimState& state, const ClothTopology& topo, const ClothParams& params,
                        double alpha_step, Forces& out) {
  const auto& p = state.positions;
  for (const auto& b : topo.bends) {
    const std::array<Vec3, 4> x{p[b.v[0]], p[b.v[1]], p[b.v[2]], p[b.v[3]]};
    // Unit stiffness first to obtain alpha, then scale.
    BendElementForces f = bend_element_forces(x, b.rest_angle, 1.0);
    if (f.degenerate) continue;
    const double k = bending_stiffness(f.alpha, b.edge_angle, params, alpha_step);
    for (int i = 0; i < 4; ++i) out[b.v[i]] += k * f.force[i];
  }
}

namespace {

void add_springs(const std::vector<Spring>& springs, double k, double c, const SimState& s,
                 Forces& out) {
  for (const auto& sp : springs) {
    const Vec3 d = s.positions[sp.j] - s.positions[sp.i];
    const double len = d.norm();
    if (len < 1e-12) continue;
    const Vec3 dir = d / len;
    const double rel_v = (s.velocities[sp.j] - s.velocities[sp.i]).dot(dir);
    const Vec3 f = (k * (len - sp.rest_length) + c * rel_v) * dir;
    out[sp.i] += f;
    out[sp.j] -= f;
  }
}

}  // namespace

void add_stretch_shear_forces(const SimState& state, const ClothTopology& topo,
                              const SceneConfig& config, Forces& out) {
  add_springs(topo.structural, config.k_struct, config.spring_damping, state, out);
  add_springs(topo.shear, config.k_shear, config.spring_damping, state, out);
}

Vec3 wind_velocity(const Vec3& p, double t, const ClothParams& params, const SceneConfig& config) {
  const double vw = params.wind_speed;
  const Vec3& w = config.wind_direction;
  Vec3 air = vw * w;
  const WakeModel& wake = config.wake;
  if (wake.gust_ratio == 0.0 || vw == 0.0) return air;

  // frequency / convection speed does not depend on v_w, so the phase stays
  // well defined as v_w -> 0.
  const double wavenumber = wake.shedding_per_metre / wake.convection_ratio;
  const double phase =
      2.0 * std::numbers::pi * (wake.shedding_per_metre * vw * t - wavenumber * p.dot(w));
  Vec3 dir;
  if (config.kind == SceneKind::flag) {
    dir = Vec3::UnitZ().cross(w);
    const double n = dir.norm();
    dir = n > 1e-12 ? Vec3(dir / n) : Vec3::UnitY();
  } else {
    dir = w;
  }
  return air + wake.gust_ratio * vw * std::sin(phase) * dir;
}

void add_external_forces(const SimState& state, const ClothTopology& topo,
                         const ClothParams& params, const SceneConfig& config, Forces& out) {
  for (std::size_t k = 0; k < topo.vertex_count(); ++k) {
    const double area = topo.lumped_area[k];
    out[k] += params.area_weight * area * config.gravity;
    const Vec3 air = wind_velocity(state.positions[k], state.time, params, config);
    out[k] += config.drag * area * (air - state.velocities[k]);
  }
}

Forces bending_forces(const SimState& state, const ClothTopology& topo, const ClothParams& params,
                      double alpha_step) {
  Forces f(topo.vertex_count(), Vec3::Zero());
  add_bending_forces(state, topo, params, alpha_step, f);
  return f;
}

Forces stretch_shear_forces(const SimState& state, const ClothTopology& topo,
                            const SceneConfig& config) {
  Forces f(topo.vertex_count(), Vec3::Zero());
  add_stretch_shear_forces(state, topo, config, f);
  return f;
}

Forces external_forces(const SimState& state, const ClothTopology& topo, const ClothParams& params,
                       const SceneConfig& config) {
  Forces f(topo.vertex_count(), Vec3::Zero());
  add_external_forces(state, topo, params, config, f);
  return f;
}

SimState step(SimState state, const ClothTopology& topo, const ClothParams& params,
              const SceneConfig& config, int frame_index) {
  const std::size_t n = topo.vertex_count();
  if (state.positions.size() != n || state.velocities.size() != n)
    throw std::invalid_argument("state does not match topology");

  std::vector<Vec3> pinned_pos;
  pinned_pos.reserve(topo.pinned.size());
  for (int v : topo.pinned) pinned_pos.push_back(state.positions[v]);

  std::vector<double> inv_mass(n);
  for (std::size_t k = 0; k < n; ++k) inv_mass[k] = 1.0 / (params.area_weight * topo.lumped_area[k]);

  const int substeps = config.substeps_per_frame();
  const double dt = config.dt;
  const double keep = 1.0 - config.damping * dt;
  Forces f(n);
  for (int s = 0; s < substeps; ++s) {
    std::fill(f.begin(), f.end(), Vec3::Zero());
    add_stretch_shear_forces(state, topo, config, f);
    add_bending_forces(state, topo, params, config.bend_alpha_step, f);
    add_external_forces(state, topo, params, config, f);
    for (std::size_t k = 0; k < n; ++k) {
      state.velocities[k] = (state.velocities[k] + dt * inv_mass[k] * f[k]) * keep;
      state.positions[k] += dt * state.velocities[k];
    }
    for (std::size_t p = 0; p < topo.pinned.size(); ++p) {
      state.positions[topo.pinned[p]] = pinned_pos[p];
      state.velocities[topo.pinned[p]].setZero();
    }
    state.time += dt;
    for (std::size_t k = 0; k < n; ++k) {
      if (!state.positions[k].allFinite() || !state.velocities[k].allFinite()) {
        std::ostringstream msg;
        msg << "non-finite state at vertex " << k << " (frame " << frame_index << ", substep " << s
            << ")";
        throw SimulationError(msg.str(), frame_index, s, static_cast<int>(k));
      }
    }
  }
  return state;
}

MeshSequence simulate(const ClothParams& params, const ClothTopology& topo,
                      const SimState& initial, const SceneConfig& config) {
  params.validate();
  config.validate();
  MeshSequence seq;
  seq.frame_dt = config.frame_dt;
  seq.frames.reserve(config.frames);
  seq.frames.push_back(initial.positions);
  SimState s = initial;
  for (int fr = 1; fr < config.frames; ++fr) {
    s = step(std::move(s), topo, params, config, fr);
    seq.frames.push_back(s.positions);
  }
  return seq;
}

SimState relax(SimState state, const ClothTopology& topo, const ClothParams& params,
               const SceneConfig& config, double seconds, double damping) {
  SceneConfig c = config;
  c.damping = damping;
  const int frames = static_cast<int>(std::ceil(seconds / c.frame_dt));
  for (int fr = 0; fr < frames; ++fr) state = step(std::move(state), topo, params, c, fr);
  state.time = 0.0;
  for (auto& v : state.velocities) v.setZero();
  return state;
}

double kinetic_energy(const SimState& state, const ClothTopology& topo, double area_weight) {
  double e = 0.0;
  for (std::size_t k = 0; k < topo.vertex_count(); ++k)
    e += 0.5 * area_weight * topo.lumped_area[k] * state.velocities[k].squaredNorm();
  return e;
}

double spring_energy(const SimState& state, const ClothTopology& topo, const SceneConfig& config) {
  auto sum = [&](const std::vector<Spring>& springs, double k) {
    double e = 0.0;
    for (const auto& sp : springs) {
      const double ext = (state.positions[sp.j] - state.positions[sp.i]).norm() - sp.rest_length;
      e += 0.5 * k * ext * ext;
    }
    return e;
  };
  return sum(topo.structural, config.k_struct) + sum(topo.shear, config.k_shear);
}

void write_obj(std::ostream& os, const std::vector<Vec3>& positions, const ClothTopology& topo) {
  os.precision(9);
  for (std::size_t k = 0; k < positions.size(); ++k) {
    os << "v " << positions[k].x() << ' ' << positions[k].y() << ' ' << positions[k].z() << '\n';
  }
  for (const auto& uv : topo.rest_uv) os << "vt " << uv.x() << ' ' << uv.y() << '\n';
  for (const auto& t : topo.triangles) {
    os << 'f';
    for (int v : t) os << ' ' << v + 1 << '/' << v + 1;
    os << '\n';
  }
}

}  // namespace clothscope::sim
