#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "clothscope/clothsim.hpp"

namespace clothscope::sim {

/// Everything needed to build and run one cloth scene.
struct SceneFile {
  SceneConfig scene;
  ClothParams params;
  int nx = 13;
  int ny = 9;
  double width = 1.5;   // m
  double height = 1.0;  // m
  double top_z = 4.6;   // m

  ClothMesh build_mesh() const;
  void validate() const;
};

SceneFile default_scene_file(SceneKind kind);

/// Layout follows the ArcSim scene files: "frame_time", "frame_steps",
/// "end_frame", "cloth" {"mesh", "material"}, "gravity", "wind", "damping".
/// Missing keys keep the defaults of the declared scene kind.
nlohmann::json to_json(const SceneFile& s);
SceneFile scene_from_json(const nlohmann::json& j);

SceneFile load_scene(const std::filesystem::path& path);
void save_scene(const std::filesystem::path& path, const SceneFile& s);

nlohmann::json params_to_json(const ClothParams& p);
ClothParams params_from_json(const nlohmann::json& j);

/// Reads and parses a JSON file; errors name the path.
nlohmann::json read_json(const std::filesystem::path& path);
/// Writes `j` with two-space indentation and a trailing newline.
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace clothscope::sim
