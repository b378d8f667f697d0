#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

namespace clothscope {

/// C x N_t x H x W intensities, row-major in that order.
struct VideoVolume {
  int channels = 0;
  int frames = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  VideoVolume() = default;
  VideoVolume(int c, int t, int h, int w, float fill = 0.0f);

  std::size_t frame_size() const { return static_cast<std::size_t>(height) * width; }
  std::size_t index(int c, int t, int y, int x) const {
    return ((static_cast<std::size_t>(c) * frames + t) * height + y) * width + x;
  }
  float& at(int c, int t, int y, int x) { return data[index(c, t, y, x)]; }
  float at(int c, int t, int y, int x) const { return data[index(c, t, y, x)]; }

  std::span<float> frame(int c, int t) { return {data.data() + index(c, t, 0, 0), frame_size()}; }
  std::span<const float> frame(int c, int t) const {
    return {data.data() + index(c, t, 0, 0), frame_size()};
  }

  bool same_shape(const VideoVolume& o) const {
    return channels == o.channels && frames == o.frames && height == o.height && width == o.width;
  }
  bool operator==(const VideoVolume& o) const = default;
};

/// VVOL container: "VVOL", u32 version (1), u32 C, N_t, H, W, then f32
/// samples; everything little-endian.
void write_vvol(std::ostream& os, const VideoVolume& v);
VideoVolume read_vvol(std::istream& is);
void write_vvol(const std::filesystem::path& path, const VideoVolume& v);
VideoVolume read_vvol(const std::filesystem::path& path);

/// 8-bit binary PGM of one frame, intensities clamped to [0, 1].
void write_pgm(const std::filesystem::path& path, const VideoVolume& v, int channel, int frame);

}  // namespace clothscope
