#pragma once

#include <vector>

#include "clothscope/clothsim.hpp"
#include "clothscope/rng.hpp"
#include "clothscope/video.hpp"

namespace clothscope::render {

using sim::Vec3;

/// Pinhole camera on a horizontal circle around the look-at point.
/// `azimuth_deg` is the angle between the horizontal viewing axis and the
/// wind direction; 0 looks straight downstream along the wind.
struct CameraParams {
  double height = 1.6;        // m above ground
  double radius = 5.0;        // m, horizontal distance to the look-at point
  double azimuth_deg = 90.0;
  Vec3 look_at{0.75, 0.0, 4.1};
  Vec3 wind_direction{1.0, 0.0, 0.0};
  double fov_deg = 30.0;      // vertical
  int image_height = 64;
  int image_width = 64;

  Vec3 position() const;
  void validate(sim::SceneKind scene) const;
};

/// Smallest camera-to-wind angle allowed for flags.
inline constexpr double kMinFlagAzimuthDeg = 15.0;

CameraParams place_camera(double height, double radius, double azimuth_deg, sim::SceneKind scene,
                          const Vec3& look_at, const Vec3& wind_direction = Vec3::UnitX(),
                          double fov_deg = 30.0, int image_height = 64, int image_width = 64);

/// Draws a camera from the dataset ranges: flags use height U(0.2, 3),
/// radius U(4, 6) and a side-on view 90 +- U(-15, 15) deg from the wind, from
/// either side;
/// hanging cloth uses height U(0.5, 2), radius U(1, 2.5) and a frontal view
/// jittered by U(-5, 5) deg.
CameraParams sample_camera(Rng& rng, sim::SceneKind scene, const Vec3& look_at,
                           const Vec3& wind_direction, double fov_deg, int image_height,
                           int image_width);

enum class Texture { flat, checkerboard };

struct RenderConfig {
  Vec3 light_direction = Vec3(0.3, -0.5, 0.812403840463596).normalized();  // towards the light
  double ambient = 0.3;
  double diffuse = 0.6;
  double background_level = 0.5;
  double background_gradient = 0.2;  // peak-to-peak across the frame
  double background_angle = 1.5707963267948966;  // rad, gradient direction in image space
  Texture texture = Texture::checkerboard;
  double checker_size = 0.25;  // m in rest UV
  double checker_dark = 0.55;  // albedo of the dark squares

  void validate() const;
};

RenderConfig sample_render_config(Rng& rng);

/// Screen-space projection; pixel centres at (x + 0.5, y + 0.5), origin top-left.
struct Projection {
  double x = 0.0;
  double y = 0.0;
  double depth = 0.0;  // distance along the viewing axis
};

class Camera {
 public:
  explicit Camera(const CameraParams& p);
  Projection project(const Vec3& p) const;
  const Vec3& eye() const { return eye_; }
  int height() const { return h_; }
  int width() const { return w_; }

 private:
  Vec3 eye_, right_, up_, forward_;
  double focal_px_;
  int h_, w_;
};

inline constexpr double kNearPlane = 1e-2;

/// Rasterises one frame into an H x W grayscale image (row-major, [0, 1]).
std::vector<float> rasterize(const std::vector<Vec3>& positions, const sim::ClothTopology& topo,
                             const CameraParams& camera, const RenderConfig& config);

/// Renders every frame of a mesh sequence; output shape (1, N, H, W).
VideoVolume render_sequence(const sim::MeshSequence& meshes, const sim::ClothTopology& topo,
                            const CameraParams& camera, const RenderConfig& config);

/// Centre-crops each frame to a square and bilinearly resamples to
/// out_h x out_w. Upscaling is rejected.
VideoVolume resize_crop(const VideoVolume& v, int out_h, int out_w);

}  // namespace clothscope::render
