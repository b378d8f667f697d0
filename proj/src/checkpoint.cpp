#include "clothscope/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

namespace clothscope::embed {

namespace {

constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(b, 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  put_u32(os, static_cast<std::uint32_t>(v));
  put_u32(os, static_cast<std::uint32_t>(v >> 32));
}

void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<std::uint64_t>(v)); }

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("truncated WEMB checkpoint");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

double get_f64(std::istream& is) {
  const std::uint64_t lo = get_u32(is);
  const std::uint64_t hi = get_u32(is);
  return std::bit_cast<double>(lo | (hi << 32));
}

}  // namespace

void write_checkpoint(std::ostream& os, const Checkpoint& ckpt) {
  const ModelConfig& c = ckpt.model.config();
  os.write("WEMB", 4);
  put_u32(os, kVersion);
  put_f64(os, c.front.sigma_t);
  put_f64(os, c.front.sigma_xy);
  put_f64(os, c.front.fps);
  put_u32(os, static_cast<std::uint32_t>(c.front.pool));
  put_u32(os, static_cast<std::uint32_t>(c.front.k));
  put_u32(os, c.front.window == spectral::Window::hann_periodic ? 0u : 1u);
  put_u32(os, c.front.log_power ? 1u : 0u);
  put_u32(os, static_cast<std::uint32_t>(c.in_channels));
  put_u32(os, static_cast<std::uint32_t>(c.base_width));
  put_u32(os, static_cast<std::uint32_t>(c.blocks));
  put_u32(os, static_cast<std::uint32_t>(c.embed_dim));
  put_u32(os, static_cast<std::uint32_t>(ckpt.clip_frames));
  put_u32(os, static_cast<std::uint32_t>(ckpt.eval_offset));

  const auto& layout = ckpt.model.layout();
  const auto& params = ckpt.model.parameters();
  put_u32(os, static_cast<std::uint32_t>(layout.size()));
  for (const ParamInfo& p : layout) {
    put_u32(os, static_cast<std::uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put_u32(os, static_cast<std::uint32_t>(p.shape.size()));
    for (int d : p.shape) put_u32(os, static_cast<std::uint32_t>(d));
    for (std::size_t i = 0; i < p.size(); ++i)
      put_u32(os, std::bit_cast<std::uint32_t>(static_cast<float>(params[p.offset + i])));
  }
  if (!os) throw std::runtime_error("failed writing WEMB checkpoint");
}

Checkpoint read_checkpoint(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "WEMB", 4) != 0)
    throw std::runtime_error("not a WEMB checkpoint (bad magic)");
  const std::uint32_t version = get_u32(is);
  if (version != kVersion)
    throw std::runtime_error("unsupported WEMB version " + std::to_string(version));

  ModelConfig c;
  c.front.sigma_t = get_f64(is);
  c.front.sigma_xy = get_f64(is);
  c.front.fps = get_f64(is);
  c.front.pool = static_cast<int>(get_u32(is));
  c.front.k = static_cast<int>(get_u32(is));
  c.front.window = get_u32(is) == 0 ? spectral::Window::hann_periodic : spectral::Window::hann_symmetric;
  c.front.log_power = get_u32(is) != 0;
  c.in_channels = static_cast<int>(get_u32(is));
  c.base_width = static_cast<int>(get_u32(is));
  c.blocks = static_cast<int>(get_u32(is));
  c.embed_dim = static_cast<int>(get_u32(is));

  Checkpoint ckpt;
  ckpt.clip_frames = static_cast<int>(get_u32(is));
  ckpt.eval_offset = static_cast<int>(get_u32(is));
  ckpt.model = EmbeddingModel(c);

  const std::uint32_t count = get_u32(is);
  const auto& layout = ckpt.model.layout();
  if (count != layout.size())
    throw std::runtime_error("checkpoint holds " + std::to_string(count) + " tensors, architecture expects " +
                             std::to_string(layout.size()));
  auto& params = ckpt.model.parameters();
  for (const ParamInfo& p : layout) {
    const std::uint32_t len = get_u32(is);
    if (len > 4096) throw std::runtime_error("implausible tensor name length in checkpoint");
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw std::runtime_error("truncated WEMB checkpoint");
    if (name != p.name)
      throw std::runtime_error("checkpoint tensor '" + name + "' where '" + p.name + "' was expected");
    const std::uint32_t rank = get_u32(is);
    if (rank != p.shape.size()) throw std::runtime_error("rank mismatch for tensor " + name);
    for (int d : p.shape)
      if (get_u32(is) != static_cast<std::uint32_t>(d))
        throw std::runtime_error("shape mismatch for tensor " + name);
    for (std::size_t i = 0; i < p.size(); ++i)
      params[p.offset + i] = static_cast<double>(std::bit_cast<float>(get_u32(is)));
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  write_checkpoint(os, ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  return read_checkpoint(is);
}

}  // namespace clothscope::embed
