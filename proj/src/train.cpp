#include "clothscope/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <string>

#include "clothscope/rng.hpp"

namespace clothscope::embed {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || weight_decay < 0.0 || !(margin > 0.0) || !(decay_factor > 0.0))
    throw std::invalid_argument("learning rate, margin and decay factor must be positive");
  if (batch_size < 4) throw std::invalid_argument("batch size must be >= 4");
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && epsilon > 0.0))
    throw std::invalid_argument("Adam moment coefficients out of range");
  if (clip_frames < 4) throw std::invalid_argument("clip_frames must be >= 4");
  if (eval_offset < 0) throw std::invalid_argument("eval_offset must be >= 0");
}

double TrainConfig::learning_rate_at(int epoch) const {
  return epoch > decay_epoch ? learning_rate / decay_factor : learning_rate;
}

VideoVolume temporal_crop(const VideoVolume& v, int offset, int n) {
  if (offset < 0 || n < 1 || offset + n > v.frames)
    throw std::invalid_argument("temporal crop [" + std::to_string(offset) + ", " +
                                std::to_string(offset + n) + ") outside a clip of " +
                                std::to_string(v.frames) + " frames");
  VideoVolume out(v.channels, n, v.height, v.width);
  for (int c = 0; c < v.channels; ++c)
    for (int t = 0; t < n; ++t) std::ranges::copy(v.frame(c, offset + t), out.frame(c, t).begin());
  return out;
}

VideoVolume flip_horizontal(const VideoVolume& v) {
  VideoVolume out(v.channels, v.frames, v.height, v.width);
  for (int c = 0; c < v.channels; ++c)
    for (int t = 0; t < v.frames; ++t)
      for (int y = 0; y < v.height; ++y)
        for (int x = 0; x < v.width; ++x) out.at(c, t, y, x) = v.at(c, t, y, v.width - 1 - x);
  return out;
}

VideoVolume standardize(const VideoVolume& v) {
  if (v.data.empty()) return v;
  double mean = 0.0;
  for (float x : v.data) mean += x;
  mean /= static_cast<double>(v.data.size());
  double var = 0.0;
  for (float x : v.data) var += (x - mean) * (x - mean);
  var /= static_cast<double>(v.data.size());
  const double inv = var > 0.0 ? 1.0 / std::sqrt(var) : 0.0;
  VideoVolume out = v;
  for (float& x : out.data) x = static_cast<float>((x - mean) * inv);
  return out;
}

VideoVolume eval_features(const EmbeddingModel& model, const VideoVolume& clip,
                          const TrainConfig& config) {
  const int offset = std::min(config.eval_offset, clip.frames - config.clip_frames);
  return spectral::front_end(standardize(temporal_crop(clip, offset, config.clip_frames)),
                             model.config().front);
}

Embedding embed_clip(const EmbeddingModel& model, const VideoVolume& clip, const TrainConfig& config) {
  return forward_features(model, eval_features(model, clip, config));
}

double batch_loss(const EmbeddingModel& model, const std::vector<VideoVolume>& features,
                  std::span<const int> labels, double margin, std::vector<double>* grad) {
  if (features.size() != labels.size()) throw std::invalid_argument("one label per batch item");
  std::vector<ForwardCache> caches(grad ? features.size() : 0);
  std::vector<Embedding> e(features.size());
  for (std::size_t i = 0; i < features.size(); ++i)
    e[i] = forward_features(model, features[i], grad ? &caches[i] : nullptr);
  std::vector<Embedding> de;
  const double loss = contrastive_loss(e, labels, margin, grad ? &de : nullptr);
  if (grad) {
    grad->assign(model.parameter_count(), 0.0);
    for (std::size_t i = 0; i < features.size(); ++i) backward_features(model, caches[i], de[i], *grad);
  }
  return loss;
}

std::vector<std::vector<int>> make_batches(const std::vector<int>& labels,
                                           const std::vector<int>& sim_order, int batch_size) {
  std::map<int, std::vector<int>> by_sim;
  for (int i = 0; i < static_cast<int>(labels.size()); ++i) by_sim[labels[i]].push_back(i);

  std::vector<std::vector<int>> batches;
  std::vector<int> current;
  int sims_in_current = 0;
  for (int sim : sim_order) {
    const auto it = by_sim.find(sim);
    if (it == by_sim.end()) continue;
    const std::vector<int>& items = it->second;
    if (!current.empty() && current.size() + items.size() > static_cast<std::size_t>(batch_size) &&
        sims_in_current >= 2) {
      batches.push_back(std::move(current));
      current.clear();
      sims_in_current = 0;
    }
    current.insert(current.end(), items.begin(), items.end());
    ++sims_in_current;
  }
  if (!current.empty()) {
    // A lone trailing simulation has no negatives; fold it into the previous batch.
    if (sims_in_current < 2 && !batches.empty())
      batches.back().insert(batches.back().end(), current.begin(), current.end());
    else
      batches.push_back(std::move(current));
  }
  return batches;
}

namespace {

std::vector<int> sim_ids(const std::vector<LabeledClip>& data) {
  std::vector<int> ids;
  for (const auto& c : data) ids.push_back(c.label);
  std::ranges::sort(ids);
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

bool usable(const std::vector<int>& batch, const std::vector<int>& labels) {
  bool pos = false, neg = false;
  for (std::size_t a = 0; a < batch.size(); ++a)
    for (std::size_t b = a + 1; b < batch.size(); ++b)
      (labels[batch[a]] == labels[batch[b]] ? pos : neg) = true;
  return pos && neg;
}

}  // namespace

double evaluation_loss(const EmbeddingModel& model, const std::vector<LabeledClip>& data,
                       const TrainConfig& config) {
  std::vector<int> labels;
  for (const auto& c : data) labels.push_back(c.label);
  double total = 0.0;
  int n = 0;
  for (const auto& batch : make_batches(labels, sim_ids(data), config.batch_size)) {
    if (!usable(batch, labels)) continue;
    std::vector<VideoVolume> feats;
    std::vector<int> lab;
    for (int i : batch) {
      feats.push_back(eval_features(model, data[i].clip, config));
      lab.push_back(labels[i]);
    }
    total += batch_loss(model, feats, lab, config.margin);
    ++n;
  }
  return n > 0 ? total / n : std::numeric_limits<double>::quiet_NaN();
}

TrainResult train(const std::vector<LabeledClip>& train_set, const std::vector<LabeledClip>& val_set,
                  const ModelConfig& model_config, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  const std::vector<int> sims = sim_ids(train_set);
  if (sims.size() < 2) throw std::invalid_argument("training needs at least two simulations");
  for (const auto& c : train_set)
    if (c.clip.channels != 1 || c.clip.frames < config.clip_frames)
      throw std::invalid_argument("training clips must be grayscale with at least " +
                                  std::to_string(config.clip_frames) + " frames");

  TrainResult result{EmbeddingModel::initialized(model_config, derive_seed({config.seed, 0x1417})), {}};
  EmbeddingModel& model = result.model;
  std::vector<double>& p = model.parameters();
  std::vector<double> m(p.size(), 0.0), v(p.size(), 0.0), grad;
  std::vector<int> labels;
  for (const auto& c : train_set) labels.push_back(c.label);

  Rng rng(derive_seed({config.seed, 0x7EA1}));
  long step = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = config.learning_rate_at(epoch);
    std::vector<int> order = sims;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    double loss_sum = 0.0;
    int batches = 0;
    for (const auto& batch : make_batches(labels, order, config.batch_size)) {
      if (!usable(batch, labels)) continue;
      std::vector<VideoVolume> feats;
      std::vector<int> lab;
      for (int i : batch) {
        const VideoVolume& clip = train_set[i].clip;
        const int offset = static_cast<int>(rng.below(static_cast<std::uint64_t>(clip.frames - config.clip_frames + 1)));
        VideoVolume x = temporal_crop(clip, offset, config.clip_frames);
        if (config.flip && rng.coin()) x = flip_horizontal(x);
        feats.push_back(spectral::front_end(standardize(x), model.config().front));
        lab.push_back(labels[i]);
      }
      const double loss = batch_loss(model, feats, lab, config.margin, &grad);
      if (!std::isfinite(loss))
        throw TrainingError("training diverged: loss is " + std::to_string(loss) + " at epoch " +
                            std::to_string(epoch) + ", batch " + std::to_string(batches + 1));

      ++step;
      const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
      for (std::size_t k = 0; k < p.size(); ++k) {
        m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * grad[k];
        v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * grad[k] * grad[k];
        p[k] -= lr * config.weight_decay * p[k];
        p[k] -= lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + config.epsilon);
      }
      loss_sum += loss;
      ++batches;
    }

    EpochLog log;
    log.epoch = epoch;
    log.learning_rate = lr;
    log.batches = batches;
    log.train_loss = batches > 0 ? loss_sum / batches : std::numeric_limits<double>::quiet_NaN();
    log.val_loss = val_set.empty() ? std::numeric_limits<double>::quiet_NaN()
                                   : evaluation_loss(model, val_set, config);
    log.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
  }

  for (double& x : p) x = static_cast<double>(static_cast<float>(x));
  return result;
}

}  // namespace clothscope::embed
