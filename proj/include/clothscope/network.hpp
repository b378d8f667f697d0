#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "clothscope/spectral.hpp"
#include "clothscope/video.hpp"

namespace clothscope::embed {

struct ModelConfig {
  spectral::FrontEndConfig front;
  int in_channels = 4;  // 2k * C of the front-end output
  int base_width = 16;  // c0
  int blocks = 2;       // B; block b has c0 * 2^b channels
  int embed_dim = 64;   // D_e

  int width(int block) const { return base_width << block; }
  void validate() const;
};

ModelConfig desk_model_config();
ModelConfig full_model_config();

struct ParamInfo {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;
  std::size_t size() const;
};

/// Trainable stack behind the fixed spectral front-end:
///   conv0 3x3 (in -> c0) + ReLU,
///   B residual blocks [conv1 3x3 (stride 2 from block 1 on) + ReLU, conv2 3x3,
///                      shortcut, + ReLU],
///   global average pool, bias-free linear map to D_e.
/// The shortcut is the identity when shapes agree; otherwise it subsamples
/// by the stride and zero-pads the new channels, so it stays parameter-free.
/// All parameters live in one flat vector described by `layout`.
class EmbeddingModel {
 public:
  EmbeddingModel() = default;
  explicit EmbeddingModel(const ModelConfig& config);

  /// He-uniform convolution weights, LeCun-uniform embedding weights, zero biases.
  static EmbeddingModel initialized(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const std::vector<ParamInfo>& layout() const { return layout_; }
  std::size_t parameter_count() const { return params_.size(); }

  std::vector<double>& parameters() { return params_; }
  const std::vector<double>& parameters() const { return params_; }
  std::span<double> tensor(const std::string& name);
  std::span<const double> tensor(const std::string& name) const;
  const ParamInfo& info(const std::string& name) const;

  bool operator==(const EmbeddingModel& o) const;

 private:
  ModelConfig config_;
  std::vector<ParamInfo> layout_;
  std::vector<double> params_;
};

struct BlockCache {
  std::vector<double> input;    // (c_in, H, W)
  std::vector<double> col1;     // im2col of input
  std::vector<double> z1;       // conv1 pre-activation
  std::vector<double> col2;     // im2col of relu(z1)
  std::vector<double> y;        // conv2 + shortcut, pre-activation
  int in_channels = 0, in_h = 0, in_w = 0;
  int out_channels = 0, out_h = 0, out_w = 0, stride = 1;
};

/// Activations of one sample kept for the backward pass.
struct ForwardCache {
  std::vector<double> col0;
  std::vector<double> a0;  // conv0 pre-activation
  int h = 0, w = 0;
  std::vector<BlockCache> blocks;
  std::vector<double> pooled;
};

/// Embedding of front-end features of shape (in_channels, 1, H, W).
std::vector<double> forward_features(const EmbeddingModel& model, const VideoVolume& features,
                                     ForwardCache* cache = nullptr);

/// Front-end followed by the trainable stack; `clip` is (1, N_t, H, W).
std::vector<double> forward(const EmbeddingModel& model, const VideoVolume& clip);

/// Accumulates dL/dparams into `grad` (same layout as the parameters) given
/// dL/de for the sample recorded in `cache`.
void backward_features(const EmbeddingModel& model, const ForwardCache& cache,
                       std::span<const double> grad_embedding, std::span<double> grad);

}  // namespace clothscope::embed
