#include "clothscope/render.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace clothscope::render {

namespace {
constexpr double kDeg = std::numbers::pi / 180.0;

Vec3 horizontal_unit(const Vec3& v) {
  Vec3 h(v.x(), v.y(), 0.0);
  const double n = h.norm();
  if (n < 1e-12) throw std::invalid_argument("wind direction has no horizontal component");
  return h / n;
}
}  // namespace

Vec3 CameraParams::position() const {
  const Vec3 w = horizontal_unit(wind_direction);
  const Vec3 side = Vec3::UnitZ().cross(w);
  const double a = azimuth_deg * kDeg;
  const Vec3 axis = std::cos(a) * w + std::sin(a) * side;  // viewing direction, horizontal
  Vec3 eye = look_at - radius * axis;
  eye.z() = height;
  return eye;
}

void CameraParams::validate(sim::SceneKind scene) const {
  if (!(radius > 0.0)) throw std::invalid_argument("camera radius must be positive");
  if (image_height < 32 || image_width < 32)
    throw std::invalid_argument("camera resolution must be at least 32x32");
  if (!(fov_deg > 0.0 && fov_deg < 180.0)) throw std::invalid_argument("field of view out of range");
  if (scene == sim::SceneKind::flag) {
    // Angle between the viewing line and the wind line, in [0, 90].
    double a = std::fmod(std::abs(azimuth_deg), 180.0);
    if (a > 90.0) a = 180.0 - a;
    if (a < kMinFlagAzimuthDeg - 1e-9)
      throw std::invalid_argument("flag camera azimuth " + std::to_string(azimuth_deg) +
                                  " deg is closer than 15 deg to the wind direction");
  }
}

CameraParams place_camera(double height, double radius, double azimuth_deg, sim::SceneKind scene,
                          const Vec3& look_at, const Vec3& wind_direction, double fov_deg,
                          int image_height, int image_width) {
  CameraParams c;
  c.height = height;
  c.radius = radius;
  c.azimuth_deg = azimuth_deg;
  c.look_at = look_at;
  c.wind_direction = wind_direction;
  c.fov_deg = fov_deg;
  c.image_height = image_height;
  c.image_width = image_width;
  c.validate(scene);
  return c;
}

CameraParams sample_camera(Rng& rng, sim::SceneKind scene, const Vec3& look_at,
                           const Vec3& wind_direction, double fov_deg, int image_height,
                           int image_width) {
  double height, radius, azimuth;
  if (scene == sim::SceneKind::flag) {
    height = rng.uniform(0.2, 3.0);
    radius = rng.uniform(4.0, 6.0);
    azimuth = 90.0 + rng.uniform(-15.0, 15.0);
    if (rng.coin()) azimuth = -azimuth;
  } else {
    height = rng.uniform(0.5, 2.0);
    radius = rng.uniform(1.0, 2.5);
    azimuth = rng.uniform(-5.0, 5.0);
  }
  return place_camera(height, radius, azimuth, scene, look_at, wind_direction, fov_deg,
                      image_height, image_width);
}

void RenderConfig::validate() const {
  if (std::abs(light_direction.norm() - 1.0) > 1e-9)
    throw std::invalid_argument("light direction must be unit length");
  if (ambient < 0.0 || diffuse < 0.0 || ambient + diffuse > 1.0 + 1e-12)
    throw std::invalid_argument("ambient and diffuse must be non-negative with sum <= 1");
  if (!(checker_size > 0.0)) throw std::invalid_argument("checker size must be positive");
}

RenderConfig sample_render_config(Rng& rng) {
  RenderConfig c;
  const double elevation = rng.uniform(25.0, 70.0) * kDeg;
  const double heading = rng.uniform(0.0, 360.0) * kDeg;
  c.light_direction = Vec3(std::cos(elevation) * std::cos(heading),
                           std::cos(elevation) * std::sin(heading), std::sin(elevation));
  c.ambient = rng.uniform(0.2, 0.4);
  c.diffuse = rng.uniform(0.45, 1.0 - c.ambient);
  c.background_level = rng.uniform(0.25, 0.75);
  c.background_gradient = rng.uniform(0.0, 0.3);
  c.background_angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
  c.checker_dark = rng.uniform(0.4, 0.7);
  return c;
}

Camera::Camera(const CameraParams& p)
    : eye_(p.position()), h_(p.image_height), w_(p.image_width) {
  forward_ = (p.look_at - eye_).normalized();
  right_ = forward_.cross(Vec3::UnitZ());
  if (right_.norm() < 1e-9) throw std::invalid_argument("camera looks straight up or down");
  right_.normalize();
  up_ = right_.cross(forward_);
  focal_px_ = 0.5 * h_ / std::tan(0.5 * p.fov_deg * kDeg);
}

Projection Camera::project(const Vec3& p) const {
  const Vec3 d = p - eye_;
  Projection out;
  out.depth = d.dot(forward_);
  const double inv = 1.0 / out.depth;
  out.x = 0.5 * w_ + focal_px_ * d.dot(right_) * inv;
  out.y = 0.5 * h_ - focal_px_ * d.dot(up_) * inv;
  return out;
}

std::vector<float> rasterize(const std::vector<Vec3>& positions, const sim::ClothTopology& topo,
                             const CameraParams& params, const RenderConfig& config) {
  const Camera cam(params);
  const int H = cam.height(), W = cam.width();
  std::vector<float> image(static_cast<std::size_t>(H) * W);
  std::vector<double> zbuf(image.size(), std::numeric_limits<double>::infinity());

  const double gx = std::cos(config.background_angle), gy = std::sin(config.background_angle);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const double t = gx * ((x + 0.5) / W - 0.5) + gy * ((y + 0.5) / H - 0.5);
      image[static_cast<std::size_t>(y) * W + x] =
          static_cast<float>(std::clamp(config.background_level + config.background_gradient * t, 0.0, 1.0));
    }

  std::vector<Projection> proj(positions.size());
  for (std::size_t k = 0; k < positions.size(); ++k) proj[k] = cam.project(positions[k]);

  for (const auto& tri : topo.triangles) {
    const Projection& p0 = proj[tri[0]];
    const Projection& p1 = proj[tri[1]];
    const Projection& p2 = proj[tri[2]];
    if (p0.depth <= kNearPlane || p1.depth <= kNearPlane || p2.depth <= kNearPlane) continue;

    const double area = (p1.x - p0.x) * (p2.y - p0.y) - (p1.y - p0.y) * (p2.x - p0.x);
    if (area == 0.0) continue;

    // Two-sided Lambert: the normal is flipped to face the viewer.
    const Vec3& a = positions[tri[0]];
    Vec3 n = (positions[tri[1]] - a).cross(positions[tri[2]] - a);
    const double nn = n.norm();
    if (nn < 1e-300) continue;
    n /= nn;
    if (n.dot(cam.eye() - a) < 0.0) n = -n;
    const double shade =
        config.ambient + config.diffuse * std::max(0.0, n.dot(config.light_direction));

    const int x0 = std::max(0, static_cast<int>(std::floor(std::min({p0.x, p1.x, p2.x}) - 0.5)));
    const int x1 = std::min(W - 1, static_cast<int>(std::ceil(std::max({p0.x, p1.x, p2.x}) - 0.5)));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min({p0.y, p1.y, p2.y}) - 0.5)));
    const int y1 = std::min(H - 1, static_cast<int>(std::ceil(std::max({p0.y, p1.y, p2.y}) - 0.5)));

    const double iz0 = 1.0 / p0.depth, iz1 = 1.0 / p1.depth, iz2 = 1.0 / p2.depth;
    const sim::Vec2& uv0 = topo.rest_uv[tri[0]];
    const sim::Vec2& uv1 = topo.rest_uv[tri[1]];
    const sim::Vec2& uv2 = topo.rest_uv[tri[2]];

    for (int y = y0; y <= y1; ++y) {
      const double py = y + 0.5;
      for (int x = x0; x <= x1; ++x) {
        const double px = x + 0.5;
        const double w0 = (p1.x - px) * (p2.y - py) - (p1.y - py) * (p2.x - px);
        const double w1 = (p2.x - px) * (p0.y - py) - (p2.y - py) * (p0.x - px);
        const double w2 = (p0.x - px) * (p1.y - py) - (p0.y - py) * (p1.x - px);
        const bool inside = (w0 >= 0 && w1 >= 0 && w2 >= 0) || (w0 <= 0 && w1 <= 0 && w2 <= 0);
        if (!inside) continue;
        const double b0 = w0 / area, b1 = w1 / area, b2 = w2 / area;
        const double inv_depth = b0 * iz0 + b1 * iz1 + b2 * iz2;
        const double depth = 1.0 / inv_depth;
        const std::size_t idx = static_cast<std::size_t>(y) * W + x;
        if (!(depth < zbuf[idx])) continue;
        zbuf[idx] = depth;

        double albedo = 1.0;
        if (config.texture == Texture::checkerboard) {
          const sim::Vec2 uv = (b0 * iz0 * uv0 + b1 * iz1 * uv1 + b2 * iz2 * uv2) * depth;
          const long cu = static_cast<long>(std::floor(uv.x() / config.checker_size));
          const long cv = static_cast<long>(std::floor(uv.y() / config.checker_size));
          if (((cu + cv) & 1L) != 0) albedo = config.checker_dark;
        }
        image[idx] = static_cast<float>(std::clamp(shade * albedo, 0.0, 1.0));
      }
    }
  }
  return image;
}

VideoVolume render_sequence(const sim::MeshSequence& meshes, const sim::ClothTopology& topo,
                            const CameraParams& camera, const RenderConfig& config) {
  if (meshes.frames.empty()) throw std::invalid_argument("cannot render an empty mesh sequence");
  config.validate();
  const int n = static_cast<int>(meshes.frames.size());
  VideoVolume v(1, n, camera.image_height, camera.image_width);
  for (int t = 0; t < n; ++t) {
    if (meshes.frames[t].size() != topo.vertex_count())
      throw std::invalid_argument("frame " + std::to_string(t) + " has " +
                                  std::to_string(meshes.frames[t].size()) + " vertices, expected " +
                                  std::to_string(topo.vertex_count()));
    const std::vector<float> img = rasterize(meshes.frames[t], topo, camera, config);
    std::copy(img.begin(), img.end(), v.frame(0, t).begin());
  }
  return v;
}

VideoVolume resize_crop(const VideoVolume& v, int out_h, int out_w) {
  const int side = std::min(v.height, v.width);
  if (out_h <= 0 || out_w <= 0) throw std::invalid_argument("output size must be positive");
  if (out_h > side || out_w > side)
    throw std::invalid_argument("resize_crop does not upscale (" + std::to_string(side) + " -> " +
                                std::to_string(out_h) + "x" + std::to_string(out_w) + ")");
  const int oy = (v.height - side) / 2;
  const int ox = (v.width - side) / 2;
  VideoVolume out(v.channels, v.frames, out_h, out_w);
  const double sy = static_cast<double>(side) / out_h;
  const double sx = static_cast<double>(side) / out_w;

  struct Tap {
    int i0, i1;
    double t;
  };
  auto taps = [side](int n, double scale) {
    std::vector<Tap> r(n);
    for (int i = 0; i < n; ++i) {
      const double src = std::clamp((i + 0.5) * scale - 0.5, 0.0, side - 1.0);
      const int i0 = std::min(static_cast<int>(src), side - 1);
      r[i] = {i0, std::min(i0 + 1, side - 1), src - i0};
    }
    return r;
  };
  const auto ty = taps(out_h, sy);
  const auto tx = taps(out_w, sx);

  for (int c = 0; c < v.channels; ++c)
    for (int t = 0; t < v.frames; ++t)
      for (int y = 0; y < out_h; ++y)
        for (int x = 0; x < out_w; ++x) {
          const auto& a = ty[y];
          const auto& b = tx[x];
          auto px = [&](int yy, int xx) { return static_cast<double>(v.at(c, t, oy + yy, ox + xx)); };
          const double top = (1.0 - b.t) * px(a.i0, b.i0) + b.t * px(a.i0, b.i1);
          const double bot = (1.0 - b.t) * px(a.i1, b.i0) + b.t * px(a.i1, b.i1);
          out.at(c, t, y, x) = static_cast<float>((1.0 - a.t) * top + a.t * bot);
        }
  return out;
}

}  // namespace clothscope::render
