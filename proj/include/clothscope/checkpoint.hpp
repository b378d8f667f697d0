#pragma once

#include <filesystem>
#include <iosfwd>

#include "clothscope/network.hpp"

namespace clothscope::embed {

struct Checkpoint {
  EmbeddingModel model;
  int clip_frames = 30;  // N_t the model was trained on
  int eval_offset = 15;
};

/// "WEMB", u32 version, config block (front-end, architecture, clip
/// protocol), u32 tensor count, then per tensor: u32 name length, name,
/// u32 rank, u32 dims, f32 data. Little-endian throughout.
void write_checkpoint(std::ostream& os, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& is);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace clothscope::embed
