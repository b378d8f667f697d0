#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "clothscope/metric.hpp"
#include "clothscope/network.hpp"
#include "clothscope/video.hpp"

namespace clothscope::embed {

struct TrainConfig {
  double learning_rate = 1e-2;
  double weight_decay = 2e-3;  // decoupled (AdamW)
  int batch_size = 32;
  double margin = 1.0;
  int epochs = 30;
  int decay_epoch = 20;        // epochs after this one run at lr / decay_factor
  double decay_factor = 10.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  int clip_frames = 30;        // N_t
  bool flip = true;
  int eval_offset = 15;        // first frame of the deterministic evaluation window

  void validate() const;
  double learning_rate_at(int epoch) const;  // epochs are 1-based
};

struct LabeledClip {
  VideoVolume clip;  // (1, frames, H, W), frames >= clip_frames
  int label = 0;     // simulation id
};

struct EpochLog {
  int epoch = 0;
  double learning_rate = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;  // NaN without a validation set
  int batches = 0;
  double wall_s = 0.0;
};

struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Frames [offset, offset + n).
VideoVolume temporal_crop(const VideoVolume& v, int offset, int n);
VideoVolume flip_horizontal(const VideoVolume& v);
/// Zero mean, unit standard deviation over the whole clip (population std);
/// a constant clip becomes all zeros.
VideoVolume standardize(const VideoVolume& v);

/// Deterministic evaluation input: crop at eval_offset, standardise, front-end.
VideoVolume eval_features(const EmbeddingModel& model, const VideoVolume& clip,
                          const TrainConfig& config);
Embedding embed_clip(const EmbeddingModel& model, const VideoVolume& clip, const TrainConfig& config);

/// Contrastive loss of a batch of front-end features and, when `grad` is
/// non-null, its gradient with respect to every trainable parameter.
double batch_loss(const EmbeddingModel& model, const std::vector<VideoVolume>& features,
                  std::span<const int> labels, double margin, std::vector<double>* grad = nullptr);

/// Groups item indices into batches of whole simulations, in order, such
/// that every batch covers at least two simulations with two renders each
/// where the data allows.
std::vector<std::vector<int>> make_batches(const std::vector<int>& labels,
                                           const std::vector<int>& sim_order, int batch_size);

/// Mean contrastive loss over deterministic batches of the evaluation window.
double evaluation_loss(const EmbeddingModel& model, const std::vector<LabeledClip>& data,
                       const TrainConfig& config);

struct TrainResult {
  EmbeddingModel model;
  std::vector<EpochLog> log;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// AdamW over BatchAll contrastive batches with per-epoch shuffling,
/// random temporal offsets, random horizontal flips and per-clip
/// standardisation. Parameters are rounded to f32 at the end so that a
/// checkpoint reload reproduces the model exactly.
TrainResult train(const std::vector<LabeledClip>& train_set, const std::vector<LabeledClip>& val_set,
                  const ModelConfig& model_config, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

}  // namespace clothscope::embed
