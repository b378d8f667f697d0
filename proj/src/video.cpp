#include "clothscope/video.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

namespace clothscope {

VideoVolume::VideoVolume(int c, int t, int h, int w, float fill)
    : channels(c), frames(t), height(h), width(w) {
  if (c < 0 || t < 0 || h < 0 || w < 0) throw std::invalid_argument("negative volume dimension");
  data.assign(static_cast<std::size_t>(c) * t * h * w, fill);
}

namespace {

constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                              static_cast<char>((v >> 16) & 0xFF),
                              static_cast<char>((v >> 24) & 0xFF)};
  os.write(b.data(), 4);
}

std::uint32_t get_u32(std::istream& is) {
  std::array<unsigned char, 4> b{};
  if (!is.read(reinterpret_cast<char*>(b.data()), 4)) throw std::runtime_error("truncated VVOL header");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_vvol(std::ostream& os, const VideoVolume& v) {
  os.write("VVOL", 4);
  put_u32(os, kVersion);
  put_u32(os, static_cast<std::uint32_t>(v.channels));
  put_u32(os, static_cast<std::uint32_t>(v.frames));
  put_u32(os, static_cast<std::uint32_t>(v.height));
  put_u32(os, static_cast<std::uint32_t>(v.width));
  for (float f : v.data) put_u32(os, std::bit_cast<std::uint32_t>(f));
  if (!os) throw std::runtime_error("failed writing VVOL stream");
}

VideoVolume read_vvol(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "VVOL", 4) != 0)
    throw std::runtime_error("not a VVOL stream (bad magic)");
  const std::uint32_t version = get_u32(is);
  if (version != kVersion)
    throw std::runtime_error("unsupported VVOL version " + std::to_string(version));
  const auto c = get_u32(is), t = get_u32(is), h = get_u32(is), w = get_u32(is);
  const std::uint64_t n = static_cast<std::uint64_t>(c) * t * h * w;
  if (n > (1ULL << 34)) throw std::runtime_error("VVOL dimensions implausibly large");
  VideoVolume v(static_cast<int>(c), static_cast<int>(t), static_cast<int>(h), static_cast<int>(w));
  for (float& f : v.data) f = std::bit_cast<float>(get_u32(is));
  return v;
}

void write_vvol(const std::filesystem::path& path, const VideoVolume& v) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_vvol(os, v);
}

VideoVolume read_vvol(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return read_vvol(is);
}

void write_pgm(const std::filesystem::path& path, const VideoVolume& v, int channel, int frame) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << "P5\n" << v.width << ' ' << v.height << "\n255\n";
  for (float f : v.frame(channel, frame)) {
    const float c = std::clamp(f, 0.0f, 1.0f);
    os.put(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0f))));
  }
}

}  // namespace clothscope
