#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "clothscope/clothsim.hpp"
#include "clothscope/rng.hpp"
#include "clothscope/scene_io.hpp"

using namespace clothscope;
using namespace clothscope::sim;

namespace {

// Plain-array vector helpers for the scalar oracles below.
using V = std::array<double, 3>;
V sub(V a, V b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
V cross(V a, V b) { return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]}; }
double dot(V a, V b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
double norm(V a) { return std::sqrt(dot(a, a)); }
V scale(V a, double s) { return {a[0] * s, a[1] * s, a[2] * s}; }
V add(V a, V b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
V arr(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

// Bending stiffness evaluated the long way: locate the alpha segment by
// scanning the nodes, interpolate each direction separately, then blend.
double stiffness_oracle(double alpha, double edge_angle, const ClothParams& p, double step) {
  auto interp = [&](int dir) {
    const double x = alpha / step;
    if (x <= 0.0) return p.bend[dir][0];
    if (x >= kBendSamples - 1) return p.bend[dir][kBendSamples - 1];
    for (int s = 0; s + 1 < kBendSamples; ++s)
      if (x >= s && x <= s + 1) return p.bend[dir][s] + (x - s) * (p.bend[dir][s + 1] - p.bend[dir][s]);
    return 0.0;
  };
  double deg = std::abs(edge_angle) * 180.0 / std::numbers::pi;
  while (deg >= 180.0) deg -= 180.0;
  if (deg > 90.0) deg = 180.0 - deg;
  if (deg <= 45.0) return interp(0) + (deg / 45.0) * (interp(1) - interp(0));
  return interp(1) + ((deg - 45.0) / 45.0) * (interp(2) - interp(1));
}

ClothParams random_params(Rng& rng) {
  ClothParams p;
  for (auto& row : p.bend)
    for (double& b : row) b = rng.uniform(0.1, 2.0);
  p.area_weight = rng.uniform(0.1, 0.17);
  p.wind_speed = rng.uniform(0.0, 10.0);
  return p;
}

std::array<Vec3, 4> random_element(Rng& rng) {
  std::array<Vec3, 4> x;
  for (auto& v : x) v = Vec3(rng.normal(), rng.normal(), rng.normal());
  return x;
}

ClothTopology single_mass() {
  ClothTopology t;
  t.rest_uv = {Vec2(0, 0)};
  t.lumped_area = {1.0};
  t.is_pinned = {0};
  return t;
}

SimState state_of(const std::vector<Vec3>& x) { return {x, std::vector<Vec3>(x.size(), Vec3::Zero()), 0.0}; }

}  // namespace

TEST_CASE("flag mesh combinatorics") {
  const ClothMesh m = build_flag_mesh(4, 3, 0.3, 0.2);
  CHECK(m.topology.vertex_count() == 12);
  CHECK(m.topology.triangles.size() == 12);
  CHECK(m.topology.pinned.size() == 3);
  for (int v : m.topology.pinned) CHECK(m.topology.rest_uv[v].x() == 0.0);
}

TEST_CASE("bend elements are exactly the interior edges") {
  const ClothMesh m = build_flag_mesh(31, 21, 1.5, 1.0);
  std::map<std::pair<int, int>, int> count;
  for (const auto& t : m.topology.triangles)
    for (int e = 0; e < 3; ++e) {
      int a = t[e], b = t[(e + 1) % 3];
      ++count[{std::min(a, b), std::max(a, b)}];
    }
  int interior = 0;
  for (const auto& [edge, c] : count) {
    CHECK(c <= 2);
    interior += c == 2;
  }
  CHECK(m.topology.bends.size() == static_cast<std::size_t>(interior));

  auto has_triangle = [&](int a, int b, int c) {
    const std::set<int> want{a, b, c};
    for (const auto& t : m.topology.triangles)
      if (std::set<int>{t[0], t[1], t[2]} == want) return true;
    return false;
  };
  std::set<std::pair<int, int>> hinges;
  for (const auto& b : m.topology.bends) {
    CHECK(has_triangle(b.v[0], b.v[2], b.v[3]));
    CHECK(has_triangle(b.v[1], b.v[3], b.v[2]));
    CHECK(count[{std::min(b.v[2], b.v[3]), std::max(b.v[2], b.v[3])}] == 2);
    CHECK(hinges.insert({std::min(b.v[2], b.v[3]), std::max(b.v[2], b.v[3])}).second);
    CHECK(b.rest_angle == 0.0);
  }
}

TEST_CASE("lumped areas partition the cloth and rest lengths match material space") {
  for (const ClothMesh& m : {build_flag_mesh(13, 9, 1.5, 1.0), build_hanging_mesh(5, 5, 1.0, 1.0),
                             build_flag_mesh(7, 4, 0.9, 0.35)}) {
    double sum = 0.0;
    for (double a : m.topology.lumped_area) sum += a;
    const auto& uv = m.topology.rest_uv;
    double w = 0, h = 0;
    for (const auto& p : uv) w = std::max(w, p.x()), h = std::max(h, p.y());
    CHECK(std::abs(sum - w * h) <= 1e-9 * w * h);
    for (const auto* springs : {&m.topology.structural, &m.topology.shear})
      for (const Spring& s : *springs) CHECK(std::abs(s.rest_length - (uv[s.i] - uv[s.j]).norm()) < 1e-15);
  }
}

TEST_CASE("hanging mesh pins the top row and rejects empty grids") {
  const ClothMesh m = build_hanging_mesh(5, 5, 1.0, 1.0);
  CHECK(m.topology.pinned.size() == 5);
  for (int v : m.topology.pinned) CHECK(m.state.positions[v].z() == doctest::Approx(2.0));
  CHECK_THROWS_AS(build_hanging_mesh(0, 0, 1.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(build_flag_mesh(1, 3, 1.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(build_flag_mesh(4, 3, 0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(build_hanging_mesh(4, 3, 1.0, -1.0), std::invalid_argument);
}

TEST_CASE("hanging cloth released horizontally falls below the rod") {
  ClothMesh m = build_hanging_mesh(9, 9, 1.0, 1.0);
  const double top = 2.0;
  // Swing the sheet about the rod into the horizontal plane.
  for (auto& p : m.state.positions) p = Vec3(p.x(), top - p.z(), top);
  SceneConfig c = default_scene(SceneKind::hanging);
  c.frames = 51;  // 2 s
  ClothParams p;
  p.bend = default_base_bending();
  const MeshSequence seq = simulate(p, m.topology, m.state, c);
  for (std::size_t v = 0; v < m.topology.vertex_count(); ++v) {
    if (m.topology.is_pinned[v]) continue;
    CHECK(seq.frames.back()[v].z() < top);
  }
}

TEST_CASE("bending stiffness at nodes, midpoints and against a scalar oracle") {
  Rng rng(11);
  const ClothParams p = random_params(rng);
  const double step = 5.0;
  CHECK(bending_stiffness(2 * step, 0.0, p, step) == doctest::Approx(p.bend[0][2]).epsilon(1e-15));
  CHECK(bending_stiffness(1.5 * step, std::numbers::pi / 4, p, step) ==
        doctest::Approx(0.5 * (p.bend[1][1] + p.bend[1][2])).epsilon(1e-14));
  for (int i = 0; i < 2000; ++i) {
    const double alpha = rng.uniform(-2.0, 6.0 * step);
    const double angle = rng.uniform(-2 * std::numbers::pi, 2 * std::numbers::pi);
    CHECK(bending_stiffness(alpha, angle, p, step) ==
          doctest::Approx(stiffness_oracle(alpha, angle, p, step)).epsilon(1e-12));
  }
}

TEST_CASE("bending stiffness is continuous and clamped") {
  Rng rng(12);
  const ClothParams p = random_params(rng);
  const double step = 5.0, eps = 1e-9;
  for (double angle : {0.0, 0.3, std::numbers::pi / 4, 1.2, std::numbers::pi / 2}) {
    const double lo = bending_stiffness(0.0, angle, p, step);
    const double hi = bending_stiffness(4 * step, angle, p, step);
    CHECK(std::abs(bending_stiffness(-eps, angle, p, step) - lo) < lo * 1e-6);
    CHECK(std::abs(bending_stiffness(eps, angle, p, step) - lo) < lo * 1e-6);
    CHECK(std::abs(bending_stiffness(4 * step + eps, angle, p, step) - hi) < hi * 1e-6);
    CHECK(std::abs(bending_stiffness(4 * step - eps, angle, p, step) - hi) < hi * 1e-6);
    CHECK(bending_stiffness(-100.0, angle, p, step) == lo);
  }
  for (double node : {1.0, 2.0, 3.0})
    for (double angle : {std::numbers::pi / 4, 0.7}) {
      const double k = bending_stiffness(node * step, angle, p, step);
      CHECK(std::abs(bending_stiffness(node * step + eps, angle, p, step) - k) < k * 1e-6);
      CHECK(std::abs(bending_stiffness(node * step, angle + eps, p, step) - k) < k * 1e-6);
    }
}

TEST_CASE("flat hinge exerts exactly zero force") {
  const std::array<Vec3, 4> x{Vec3(0.5, 1, 0), Vec3(0.5, -1, 0), Vec3(0, 0, 0), Vec3(1, 0, 0)};
  const BendElementForces f = bend_element_forces(x, 0.0, 3.7);
  CHECK(f.dihedral == 0.0);
  for (const auto& v : f.force) CHECK(v == Vec3::Zero());

  ClothMesh m = build_flag_mesh(6, 5, 0.5, 0.4);
  for (auto& p : m.state.positions) p.y() = 0.0;  // remove the ripple
  ClothParams p;
  p.bend = default_base_bending();
  for (const auto& v : bending_forces(m.state, m.topology, p, 5.0)) CHECK(v == Vec3::Zero());
}

TEST_CASE("hinge forces conserve momentum and angular momentum") {
  Rng rng(5);
  int tested = 0;
  for (int i = 0; i < 2000; ++i) {
    const auto x = random_element(rng);
    const BendElementForces f = bend_element_forces(x, rng.uniform(-1.0, 1.0), rng.uniform(0.1, 10.0));
    if (f.degenerate) continue;
    ++tested;
    Vec3 net = Vec3::Zero(), torque = Vec3::Zero();
    for (int k = 0; k < 4; ++k) {
      net += f.force[k];
      torque += x[k].cross(f.force[k]);
    }
    CHECK(net.norm() < 1e-9);
    CHECK(torque.norm() < 1e-9);
  }
  CHECK(tested > 1900);
}

TEST_CASE("hinge folded by 30 degrees matches a term-by-term evaluation") {
  const double fold = std::numbers::pi / 6;
  const std::array<Vec3, 4> x{Vec3(0.5, 1, 0), Vec3(0.5, -std::cos(fold), std::sin(fold)), Vec3(0, 0, 0),
                              Vec3(1, 0, 0)};
  const BendElementForces f = bend_element_forces(x, 0.0, 1.0);
  CHECK(std::abs(f.dihedral) == doctest::Approx(fold).epsilon(1e-12));

  const V x1 = arr(x[0]), x2 = arr(x[1]), x3 = arr(x[2]), x4 = arr(x[3]);
  const V n1 = cross(sub(x1, x3), sub(x1, x4));
  const V n2 = cross(sub(x2, x4), sub(x2, x3));
  const V e = sub(x4, x3);
  const double le = norm(e), a1 = norm(n1), a2 = norm(n2);
  double phi = std::acos(std::clamp(dot(n1, n2) / (a1 * a2), -1.0, 1.0));
  if (dot(cross(n1, n2), e) < 0) phi = -phi;
  const V w1 = scale(n1, 1.0 / (a1 * a1)), w2 = scale(n2, 1.0 / (a2 * a2));
  const V u[4] = {scale(w1, le), scale(w2, le),
                  add(scale(w1, dot(sub(x1, x4), e) / le), scale(w2, dot(sub(x2, x4), e) / le)),
                  scale(add(scale(w1, dot(sub(x1, x3), e) / le), scale(w2, dot(sub(x2, x3), e) / le)), -1.0)};
  const double magnitude = le * le / (a1 + a2) * std::sin(phi / 2);
  for (int k = 0; k < 4; ++k)
    for (int c = 0; c < 3; ++c) CHECK(f.force[k][c] == doctest::Approx(magnitude * u[k][c]).epsilon(1e-12));
  CHECK(f.alpha == doctest::Approx(std::abs(std::sin(phi / 2)) / (a1 + a2)).epsilon(1e-14));
}

TEST_CASE("degenerate hinges are skipped") {
  const std::array<Vec3, 4> x{Vec3(0.5, 0, 0), Vec3(0.5, -1, 0), Vec3(0, 0, 0), Vec3(1, 0, 0)};
  const BendElementForces f = bend_element_forces(x, 0.0, 1.0);
  CHECK(f.degenerate);
  for (const auto& v : f.force) CHECK(v == Vec3::Zero());
}

TEST_CASE("springs follow Hooke's law") {
  ClothTopology t;
  t.rest_uv = {Vec2(0, 0), Vec2(1, 0)};
  t.lumped_area = {0.5, 0.5};
  t.is_pinned = {0, 0};
  t.structural = {{0, 1, 1.0}};
  SceneConfig c;
  SimState s = state_of({Vec3(0, 0, 0), Vec3(1, 0, 0)});
  for (const auto& v : stretch_shear_forces(s, t, c)) CHECK(v == Vec3::Zero());

  const double delta = 0.03;
  s.positions[1].x() += delta;
  const Forces f = stretch_shear_forces(s, t, c);
  CHECK(f[0].norm() == doctest::Approx(c.k_struct * delta).epsilon(1e-12));
  CHECK((f[0] + f[1]).norm() < 1e-15);
  CHECK(f[0].x() > 0.0);
}

TEST_CASE("internal forces sum to zero on random states") {
  Rng rng(9);
  ClothMesh m = build_flag_mesh(8, 6, 0.8, 0.6);
  const SceneConfig c = default_scene(SceneKind::flag);
  for (int trial = 0; trial < 20; ++trial) {
    const ClothParams p = random_params(rng);
    SimState s = m.state;
    for (auto& x : s.positions) x += 0.05 * Vec3(rng.normal(), rng.normal(), rng.normal());
    for (auto& v : s.velocities) v = Vec3(rng.normal(), rng.normal(), rng.normal());
    Forces f(s.positions.size(), Vec3::Zero());
    add_stretch_shear_forces(s, m.topology, c, f);
    add_bending_forces(s, m.topology, p, c.bend_alpha_step, f);
    Vec3 total = Vec3::Zero();
    for (const auto& v : f) total += v;
    CHECK(total.norm() < 1e-9);
  }
}

TEST_CASE("external forces: gravity total and linearity of drag in wind speed") {
  ClothMesh m = build_flag_mesh(13, 9, 1.5, 1.0);
  const SceneConfig c = default_scene(SceneKind::flag);
  ClothParams p;
  p.bend = default_base_bending();
  p.area_weight = 0.15;

  p.wind_speed = 0.0;
  const Forces g = external_forces(m.state, m.topology, p, c);
  Vec3 total = Vec3::Zero();
  for (const auto& v : g) total += v;
  CHECK(total.z() == doctest::Approx(-p.area_weight * 1.5 * 9.81).epsilon(1e-12));
  CHECK(std::abs(total.x()) + std::abs(total.y()) < 1e-15);
  for (std::size_t k = 0; k < g.size(); ++k)
    CHECK((g[k] - p.area_weight * m.topology.lumped_area[k] * c.gravity).norm() == 0.0);

  p.wind_speed = 3.0;
  const Forces w1 = external_forces(m.state, m.topology, p, c);
  p.wind_speed = 6.0;
  const Forces w2 = external_forces(m.state, m.topology, p, c);
  for (std::size_t k = 0; k < g.size(); ++k) {
    const Vec3 d1 = w1[k] - g[k], d2 = w2[k] - g[k];
    CHECK((d2 - 2.0 * d1).norm() < 1e-12 * (1.0 + d1.norm()));
  }
}

TEST_CASE("free flight and constant gravity match the semi-implicit closed forms") {
  ClothTopology t = single_mass();
  SceneConfig c;
  c.gravity = Vec3::Zero();
  c.drag = 0.0;
  c.damping = 0.0;
  ClothParams p;
  p.bend = default_base_bending();
  const Vec3 u(0.3, -1.2, 2.0);
  SimState s{{Vec3(1, 2, 3)}, {u}, 0.0};
  const SimState a = step(s, t, p, c);
  CHECK((a.positions[0] - (Vec3(1, 2, 3) + c.frame_dt * u)).norm() < 1e-13);

  c.gravity = Vec3(0, 0, -9.81);
  SimState r{{Vec3::Zero()}, {Vec3::Zero()}, 0.0};
  r = step(step(r, t, p, c), t, p, c);
  const int n = 2 * c.substeps_per_frame();
  CHECK(r.velocities[0].z() == doctest::Approx(-9.81 * n * c.dt).epsilon(1e-12));
  // x_n = -g dt^2 n (n + 1) / 2 for semi-implicit Euler.
  CHECK(r.positions[0].z() == doctest::Approx(-9.81 * c.dt * c.dt * n * (n + 1) / 2.0).epsilon(1e-12));
}

TEST_CASE("simulation is deterministic, finite and keeps pins fixed") {
  const SceneFile scene = default_scene_file(SceneKind::flag);
  const ClothMesh m = scene.build_mesh();
  ClothParams p;
  p.bend = default_base_bending();
  p.wind_speed = 5.0;
  const MeshSequence a = simulate(p, m.topology, m.state, scene.scene);
  const MeshSequence b = simulate(p, m.topology, m.state, scene.scene);
  REQUIRE(a.frames.size() == 60);
  CHECK(a.frames == b.frames);
  for (const auto& f : a.frames) {
    for (const auto& x : f) CHECK(x.allFinite());
    for (int v : m.topology.pinned) CHECK(f[v] == m.state.positions[v]);
  }
  double moved = 0.0;
  for (std::size_t v = 0; v < m.topology.vertex_count(); ++v)
    moved = std::max(moved, (a.frames.back()[v] - a.frames.front()[v]).norm());
  CHECK(moved > 0.05);
}

TEST_CASE("still air leaves a relaxed flag at rest") {
  const SceneFile scene = default_scene_file(SceneKind::flag);
  const ClothMesh m = scene.build_mesh();
  ClothParams p;
  p.bend = default_base_bending();
  p.wind_speed = 0.0;
  const SimState rest = relax(m.state, m.topology, p, scene.scene);
  const MeshSequence seq = simulate(p, m.topology, rest, scene.scene);
  double max_disp = 0.0;
  for (const auto& f : seq.frames)
    for (std::size_t v = 0; v < f.size(); ++v) max_disp = std::max(max_disp, (f[v] - rest.positions[v]).norm());
  CHECK(max_disp < 1e-3);
}

TEST_CASE("damping dissipates energy of a free cloth") {
  Rng rng(21);
  ClothMesh m = build_flag_mesh(7, 5, 0.6, 0.4);
  m.topology.pinned.clear();
  std::fill(m.topology.is_pinned.begin(), m.topology.is_pinned.end(), 0);
  for (auto& x : m.state.positions) x += 0.02 * Vec3(rng.normal(), rng.normal(), rng.normal());
  SceneConfig c = default_scene(SceneKind::flag);
  c.gravity = Vec3::Zero();
  c.damping = 0.5;
  c.frames = 51;
  ClothParams p;
  p.bend = default_base_bending();
  p.wind_speed = 0.0;
  SimState s = m.state;
  const double e0 = kinetic_energy(s, m.topology, p.area_weight) + spring_energy(s, m.topology, c);
  for (int f = 1; f < c.frames; ++f) s = step(s, m.topology, p, c, f);
  const double e1 = kinetic_energy(s, m.topology, p.area_weight) + spring_energy(s, m.topology, c);
  CHECK(e0 > 0.0);
  CHECK(e1 < e0);
}

TEST_CASE("non-finite state aborts with the offending vertex") {
  ClothTopology t = single_mass();
  t.rest_uv.push_back(Vec2(1, 0));
  t.lumped_area.push_back(1.0);
  t.is_pinned.push_back(0);
  ClothParams p;
  p.bend = default_base_bending();
  SimState s = state_of({Vec3(0, 0, 0), Vec3(std::nan(""), 0, 0)});
  try {
    step(s, t, p, default_scene(SceneKind::flag), 7);
    FAIL("expected SimulationError");
  } catch (const SimulationError& e) {
    CHECK(e.vertex == 1);
    CHECK(e.frame == 7);
    CHECK(e.substep == 0);
    CHECK(std::string(e.what()).find("vertex 1") != std::string::npos);
  }
}

TEST_CASE("scene config validation") {
  SceneConfig c;
  c.dt = 3e-3;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = SceneConfig{};
  c.wind_direction = Vec3(1, 1, 0);
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  CHECK(SceneConfig{}.substeps_per_frame() == 40);
  ClothParams p;
  p.bend = default_base_bending();
  p.bend[1][3] = 0.0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}

TEST_CASE("parameter vector flattening round trip") {
  Rng rng(3);
  const ClothParams p = random_params(rng);
  const auto flat = p.flatten();
  CHECK(flat.size() == 17);
  CHECK(flat[0] == p.bend[0][0]);
  CHECK(flat[7] == p.bend[1][2]);
  CHECK(flat[15] == p.area_weight);
  CHECK(flat[16] == p.wind_speed);
  const ClothParams q = ClothParams::unflatten(flat);
  CHECK(q.flatten() == flat);
}

TEST_CASE("scene files round trip through JSON") {
  for (SceneKind kind : {SceneKind::flag, SceneKind::hanging}) {
    SceneFile s = default_scene_file(kind);
    s.params.wind_speed = 4.25;
    s.scene.drag = 0.7;
    s.nx = 11;
    const SceneFile r = scene_from_json(nlohmann::json::parse(to_json(s).dump()));
    CHECK(to_json(r) == to_json(s));
    CHECK(r.scene.kind == kind);
  }
  const SceneFile h = scene_from_json(nlohmann::json{{"scene", "hanging"}});
  CHECK(h.nx == default_scene_file(SceneKind::hanging).nx);
  CHECK_THROWS(scene_from_json(nlohmann::json{{"scene", "sail"}}));
}

TEST_CASE("OBJ export lists every vertex and face") {
  const ClothMesh m = build_flag_mesh(4, 3, 0.3, 0.2);
  std::ostringstream os;
  write_obj(os, m.state.positions, m.topology);
  std::istringstream is(os.str());
  std::string line;
  int v = 0, f = 0;
  while (std::getline(is, line)) {
    v += line.rfind("v ", 0) == 0;
    f += line.rfind("f ", 0) == 0;
  }
  CHECK(v == 12);
  CHECK(f == 12);
}
