#include "clothscope/scene_io.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace clothscope::sim {

using nlohmann::json;

namespace {

json vec_to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec_from_json(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3)
    throw std::invalid_argument(std::string(what) + " must be a 3-element array");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

template <class T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

ClothMesh SceneFile::build_mesh() const {
  return scene.kind == SceneKind::flag ? build_flag_mesh(nx, ny, width, height, top_z)
                                       : build_hanging_mesh(nx, ny, width, height, top_z);
}

void SceneFile::validate() const {
  scene.validate();
  params.validate();
  if (nx < 2 || ny < 2) throw std::invalid_argument("cloth grid needs at least 2x2 vertices");
  if (!(width > 0.0) || !(height > 0.0))
    throw std::invalid_argument("cloth dimensions must be positive");
}

SceneFile default_scene_file(SceneKind kind) {
  SceneFile s;
  s.scene = default_scene(kind);
  s.params.bend = default_base_bending();
  if (kind == SceneKind::hanging) {
    s.nx = 9;
    s.ny = 9;
    s.width = 1.0;
    s.height = 1.0;
    s.top_z = 2.0;
  }
  return s;
}

json params_to_json(const ClothParams& p) {
  json bend = json::array();
  for (const auto& row : p.bend) bend.push_back(json(std::vector<double>(row.begin(), row.end())));
  return json{{"bending", bend}, {"area_weight", p.area_weight}, {"wind_speed", p.wind_speed}};
}

ClothParams params_from_json(const json& j) {
  ClothParams p;
  const json& bend = j.at("bending");
  if (!bend.is_array() || bend.size() != kBendDirections)
    throw std::invalid_argument("bending must be a 3x5 array");
  for (int d = 0; d < kBendDirections; ++d) {
    if (!bend[d].is_array() || bend[d].size() != kBendSamples)
      throw std::invalid_argument("bending must be a 3x5 array");
    for (int s = 0; s < kBendSamples; ++s) p.bend[d][s] = bend[d][s].get<double>();
  }
  p.area_weight = j.at("area_weight").get<double>();
  p.wind_speed = j.at("wind_speed").get<double>();
  return p;
}

json to_json(const SceneFile& s) {
  const SceneConfig& c = s.scene;
  json bend = params_to_json(s.params).at("bending");
  return json{
      {"scene", to_string(c.kind)},
      {"frame_time", c.frame_dt},
      {"frame_steps", c.substeps_per_frame()},
      {"end_frame", c.frames},
      {"cloth",
       {{"mesh", {{"nx", s.nx}, {"ny", s.ny}, {"width", s.width}, {"height", s.height}, {"top", s.top_z}}},
        {"material",
         {{"area_weight", s.params.area_weight},
          {"bending", bend},
          {"bending_alpha_step", c.bend_alpha_step},
          {"stretching",
           {{"structural", c.k_struct}, {"shear", c.k_shear}, {"damping", c.spring_damping}}}}}}},
      {"gravity", vec_to_json(c.gravity)},
      {"wind",
       {{"speed", s.params.wind_speed},
        {"direction", vec_to_json(c.wind_direction)},
        {"drag", c.drag},
        {"wake",
         {{"gust_ratio", c.wake.gust_ratio},
          {"shedding_per_metre", c.wake.shedding_per_metre},
          {"convection_ratio", c.wake.convection_ratio}}}}},
      {"damping", c.damping}};
}

SceneFile scene_from_json(const json& j) {
  const SceneKind kind = scene_kind_from_string(j.value("scene", std::string("flag")));
  SceneFile s = default_scene_file(kind);
  SceneConfig& c = s.scene;

  read_opt(j, "frame_time", c.frame_dt);
  if (j.contains("frame_steps")) {
    const int steps = j.at("frame_steps").get<int>();
    if (steps < 1) throw std::invalid_argument("frame_steps must be >= 1");
    c.dt = c.frame_dt / steps;
  }
  read_opt(j, "end_frame", c.frames);
  read_opt(j, "damping", c.damping);
  if (j.contains("gravity")) c.gravity = vec_from_json(j.at("gravity"), "gravity");

  if (j.contains("cloth")) {
    const json& cloth = j.at("cloth");
    if (cloth.contains("mesh")) {
      const json& m = cloth.at("mesh");
      read_opt(m, "nx", s.nx);
      read_opt(m, "ny", s.ny);
      read_opt(m, "width", s.width);
      read_opt(m, "height", s.height);
      read_opt(m, "top", s.top_z);
    }
    if (cloth.contains("material")) {
      const json& m = cloth.at("material");
      read_opt(m, "area_weight", s.params.area_weight);
      if (m.contains("bending"))
        s.params.bend =
            params_from_json({{"bending", m.at("bending")}, {"area_weight", 1.0}, {"wind_speed", 0.0}})
                .bend;
      read_opt(m, "bending_alpha_step", c.bend_alpha_step);
      if (m.contains("stretching")) {
        const json& st = m.at("stretching");
        read_opt(st, "structural", c.k_struct);
        read_opt(st, "shear", c.k_shear);
        read_opt(st, "damping", c.spring_damping);
      }
    }
  }

  if (j.contains("wind")) {
    const json& w = j.at("wind");
    read_opt(w, "speed", s.params.wind_speed);
    if (w.contains("direction")) c.wind_direction = vec_from_json(w.at("direction"), "wind direction");
    read_opt(w, "drag", c.drag);
    if (w.contains("wake")) {
      const json& wk = w.at("wake");
      read_opt(wk, "gust_ratio", c.wake.gust_ratio);
      read_opt(wk, "shedding_per_metre", c.wake.shedding_per_metre);
      read_opt(wk, "convection_ratio", c.wake.convection_ratio);
    }
  }
  s.validate();
  return s;
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

SceneFile load_scene(const std::filesystem::path& path) {
  try {
    return scene_from_json(read_json(path));
  } catch (const json::exception& e) {
    throw std::runtime_error("invalid scene file " + path.string() + ": " + e.what());
  }
}

void save_scene(const std::filesystem::path& path, const SceneFile& s) { write_json(path, to_json(s)); }

}  // namespace clothscope::sim
