#include "clothscope/network.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

#include "clothscope/rng.hpp"

namespace clothscope::embed {

namespace {

using MatMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using CMatMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

constexpr int kK = 3;  // kernel size; padding is 1

int conv_out(int n, int stride) { return (n - 1) / stride + 1; }

// col has shape (cin * 9, ho * wo), row-major.
void im2col(const std::vector<double>& x, int cin, int h, int w, int stride,
            std::vector<double>& col) {
  const int ho = conv_out(h, stride), wo = conv_out(w, stride);
  col.assign(static_cast<std::size_t>(cin) * kK * kK * ho * wo, 0.0);
  std::size_t r = 0;
  for (int c = 0; c < cin; ++c)
    for (int ky = 0; ky < kK; ++ky)
      for (int kx = 0; kx < kK; ++kx, ++r) {
        double* row = col.data() + r * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride + ky - 1;
          if (iy < 0 || iy >= h) continue;
          const double* src = x.data() + (static_cast<std::size_t>(c) * h + iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride + kx - 1;
            if (ix >= 0 && ix < w) row[oy * wo + ox] = src[ix];
          }
        }
      }
}

void col2im_add(const std::vector<double>& col, int cin, int h, int w, int stride,
                std::vector<double>& dx) {
  const int ho = conv_out(h, stride), wo = conv_out(w, stride);
  std::size_t r = 0;
  for (int c = 0; c < cin; ++c)
    for (int ky = 0; ky < kK; ++ky)
      for (int kx = 0; kx < kK; ++kx, ++r) {
        const double* row = col.data() + r * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride + ky - 1;
          if (iy < 0 || iy >= h) continue;
          double* dst = dx.data() + (static_cast<std::size_t>(c) * h + iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride + kx - 1;
            if (ix >= 0 && ix < w) dst[ix] += row[oy * wo + ox];
          }
        }
      }
}

// out (cout, ho*wo) = W (cout, cin*9) * col + b
std::vector<double> conv_forward(const double* weight, const double* bias, int cout, int cin,
                                 const std::vector<double>& col, int npix) {
  std::vector<double> out(static_cast<std::size_t>(cout) * npix);
  MatMap o(out.data(), cout, npix);
  o.noalias() = CMatMap(weight, cout, cin * kK * kK) * CMatMap(col.data(), cin * kK * kK, npix);
  for (int c = 0; c < cout; ++c) o.row(c).array() += bias[c];
  return out;
}

// Accumulates weight/bias gradients; returns d(col) when requested.
void conv_backward(const double* weight, double* gweight, double* gbias, int cout, int cin,
                   const std::vector<double>& col, const std::vector<double>& dout, int npix,
                   std::vector<double>* dcol) {
  const int kk = cin * kK * kK;
  CMatMap d(dout.data(), cout, npix);
  MatMap(gweight, cout, kk).noalias() += d * CMatMap(col.data(), kk, npix).transpose();
  for (int c = 0; c < cout; ++c) gbias[c] += d.row(c).sum();
  if (dcol) {
    dcol->resize(static_cast<std::size_t>(kk) * npix);
    MatMap(dcol->data(), kk, npix).noalias() = CMatMap(weight, cout, kk).transpose() * d;
  }
}

std::vector<double> relu(const std::vector<double>& a) {
  std::vector<double> r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] > 0.0 ? a[i] : 0.0;
  return r;
}

void relu_mask(std::vector<double>& grad, const std::vector<double>& pre) {
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (!(pre[i] > 0.0)) grad[i] = 0.0;
}

}  // namespace

void ModelConfig::validate() const {
  if (front.k < 1) throw std::invalid_argument("front-end k must be >= 1");
  if (in_channels != 4 * front.k)
    throw std::invalid_argument("in_channels must equal 4k for grayscale input (got " +
                                std::to_string(in_channels) + ")");
  if (base_width < 1 || blocks < 1 || embed_dim < 1)
    throw std::invalid_argument("network widths, block count and embedding size must be positive");
}

ModelConfig desk_model_config() { return {}; }

ModelConfig full_model_config() {
  ModelConfig c;
  c.blocks = 3;
  c.embed_dim = 512;
  return c;
}

std::size_t ParamInfo::size() const {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

EmbeddingModel::EmbeddingModel(const ModelConfig& config) : config_(config) {
  config_.validate();
  std::size_t offset = 0;
  auto add = [&](std::string name, std::vector<int> shape) {
    ParamInfo p{std::move(name), std::move(shape), offset};
    offset += p.size();
    layout_.push_back(std::move(p));
  };
  add("conv0.weight", {config_.base_width, config_.in_channels, kK, kK});
  add("conv0.bias", {config_.base_width});
  int cin = config_.base_width;
  for (int b = 0; b < config_.blocks; ++b) {
    const int c = config_.width(b);
    const std::string pre = "block" + std::to_string(b);
    add(pre + ".conv1.weight", {c, cin, kK, kK});
    add(pre + ".conv1.bias", {c});
    add(pre + ".conv2.weight", {c, c, kK, kK});
    add(pre + ".conv2.bias", {c});
    cin = c;
  }
  add("embed.weight", {config_.embed_dim, cin});
  params_.assign(offset, 0.0);
}

EmbeddingModel EmbeddingModel::initialized(const ModelConfig& config, std::uint64_t seed) {
  EmbeddingModel m(config);
  Rng rng(seed);
  for (const ParamInfo& p : m.layout_) {
    if (p.shape.size() == 1) continue;  // biases start at zero
    std::size_t fan_in = 1;
    for (std::size_t d = 1; d < p.shape.size(); ++d) fan_in *= static_cast<std::size_t>(p.shape[d]);
    const double gain = p.name == "embed.weight" ? 3.0 : 6.0;
    const double bound = std::sqrt(gain / static_cast<double>(fan_in));
    for (std::size_t i = 0; i < p.size(); ++i) m.params_[p.offset + i] = rng.uniform(-bound, bound);
  }
  return m;
}

const ParamInfo& EmbeddingModel::info(const std::string& name) const {
  for (const ParamInfo& p : layout_)
    if (p.name == name) return p;
  throw std::out_of_range("no parameter tensor named '" + name + "'");
}

std::span<double> EmbeddingModel::tensor(const std::string& name) {
  const ParamInfo& p = info(name);
  return {params_.data() + p.offset, p.size()};
}

std::span<const double> EmbeddingModel::tensor(const std::string& name) const {
  const ParamInfo& p = info(name);
  return {params_.data() + p.offset, p.size()};
}

bool EmbeddingModel::operator==(const EmbeddingModel& o) const {
  const ModelConfig &a = config_, &b = o.config_;
  return a.front.sigma_t == b.front.sigma_t && a.front.sigma_xy == b.front.sigma_xy &&
         a.front.pool == b.front.pool && a.front.k == b.front.k && a.front.fps == b.front.fps &&
         a.front.window == b.front.window && a.front.log_power == b.front.log_power &&
         a.in_channels == b.in_channels && a.base_width == b.base_width && a.blocks == b.blocks &&
         a.embed_dim == b.embed_dim && params_ == o.params_;
}

std::vector<double> forward_features(const EmbeddingModel& model, const VideoVolume& features,
                                     ForwardCache* cache) {
  const ModelConfig& cfg = model.config();
  if (features.channels != cfg.in_channels || features.frames != 1)
    throw std::invalid_argument("expected features of shape (" + std::to_string(cfg.in_channels) +
                                ", 1, H, W), got (" + std::to_string(features.channels) + ", " +
                                std::to_string(features.frames) + ", H, W)");
  if (features.height < 16 || features.width < 16)
    throw std::invalid_argument("feature maps must be at least 16x16, got " +
                                std::to_string(features.height) + "x" +
                                std::to_string(features.width));

  const auto& P = model.parameters();
  auto param = [&](const std::string& name) { return P.data() + model.info(name).offset; };

  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  int h = features.height, w = features.width;
  c.h = h;
  c.w = w;

  std::vector<double> x(features.data.begin(), features.data.end());
  im2col(x, cfg.in_channels, h, w, 1, c.col0);
  c.a0 = conv_forward(param("conv0.weight"), param("conv0.bias"), cfg.base_width, cfg.in_channels,
                      c.col0, h * w);
  x = relu(c.a0);

  int cin = cfg.base_width;
  c.blocks.resize(cfg.blocks);
  for (int b = 0; b < cfg.blocks; ++b) {
    BlockCache& bc = c.blocks[b];
    const std::string pre = "block" + std::to_string(b);
    const int cout = cfg.width(b);
    const int stride = b == 0 ? 1 : 2;
    const int ho = conv_out(h, stride), wo = conv_out(w, stride);
    bc.in_channels = cin;
    bc.in_h = h;
    bc.in_w = w;
    bc.out_channels = cout;
    bc.out_h = ho;
    bc.out_w = wo;
    bc.stride = stride;
    bc.input = std::move(x);

    im2col(bc.input, cin, h, w, stride, bc.col1);
    bc.z1 = conv_forward(param(pre + ".conv1.weight"), param(pre + ".conv1.bias"), cout, cin,
                         bc.col1, ho * wo);
    im2col(relu(bc.z1), cout, ho, wo, 1, bc.col2);
    bc.y = conv_forward(param(pre + ".conv2.weight"), param(pre + ".conv2.bias"), cout, cout,
                        bc.col2, ho * wo);
    // Shortcut: strided subsample, channels beyond c_in are zero.
    for (int ch = 0; ch < std::min(cin, cout); ++ch)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox)
          bc.y[(static_cast<std::size_t>(ch) * ho + oy) * wo + ox] +=
              bc.input[(static_cast<std::size_t>(ch) * h + oy * stride) * w + ox * stride];
    x = relu(bc.y);
    cin = cout;
    h = ho;
    w = wo;
  }

  c.pooled.assign(cin, 0.0);
  const double inv = 1.0 / (static_cast<double>(h) * w);
  for (int ch = 0; ch < cin; ++ch) {
    double s = 0.0;
    for (int i = 0; i < h * w; ++i) s += x[static_cast<std::size_t>(ch) * h * w + i];
    c.pooled[ch] = s * inv;
  }

  std::vector<double> e(cfg.embed_dim);
  Eigen::Map<Eigen::VectorXd>(e.data(), cfg.embed_dim).noalias() =
      CMatMap(param("embed.weight"), cfg.embed_dim, cin) *
      Eigen::Map<const Eigen::VectorXd>(c.pooled.data(), cin);
  return e;
}

std::vector<double> forward(const EmbeddingModel& model, const VideoVolume& clip) {
  if (clip.channels != 1)
    throw std::invalid_argument("expected a grayscale clip (1 channel), got " +
                                std::to_string(clip.channels));
  return forward_features(model, spectral::front_end(clip, model.config().front));
}

void backward_features(const EmbeddingModel& model, const ForwardCache& c,
                       std::span<const double> grad_embedding, std::span<double> grad) {
  const ModelConfig& cfg = model.config();
  if (grad.size() != model.parameter_count())
    throw std::invalid_argument("gradient buffer does not match the parameter layout");
  if (grad_embedding.size() != static_cast<std::size_t>(cfg.embed_dim))
    throw std::invalid_argument("embedding gradient has the wrong length");
  const auto& P = model.parameters();
  auto param = [&](const std::string& name) { return P.data() + model.info(name).offset; };
  auto gparam = [&](const std::string& name) { return grad.data() + model.info(name).offset; };

  const int clast = cfg.width(cfg.blocks - 1);
  Eigen::Map<const Eigen::VectorXd> de(grad_embedding.data(), cfg.embed_dim);
  Eigen::Map<const Eigen::VectorXd> g(c.pooled.data(), clast);
  MatMap(gparam("embed.weight"), cfg.embed_dim, clast).noalias() += de * g.transpose();
  Eigen::VectorXd dg = CMatMap(param("embed.weight"), cfg.embed_dim, clast).transpose() * de;

  const BlockCache& last = c.blocks.back();
  const int npix = last.out_h * last.out_w;
  std::vector<double> dx(static_cast<std::size_t>(clast) * npix);
  for (int ch = 0; ch < clast; ++ch)
    std::fill_n(dx.begin() + static_cast<std::ptrdiff_t>(ch) * npix, npix, dg[ch] / npix);

  std::vector<double> dcol;
  for (int b = cfg.blocks - 1; b >= 0; --b) {
    const BlockCache& bc = c.blocks[b];
    const std::string pre = "block" + std::to_string(b);
    const int ho = bc.out_h, wo = bc.out_w, n = ho * wo;

    std::vector<double> dy = std::move(dx);
    relu_mask(dy, bc.y);

    conv_backward(param(pre + ".conv2.weight"), gparam(pre + ".conv2.weight"),
                  gparam(pre + ".conv2.bias"), bc.out_channels, bc.out_channels, bc.col2, dy, n,
                  &dcol);
    std::vector<double> dr1(static_cast<std::size_t>(bc.out_channels) * n, 0.0);
    col2im_add(dcol, bc.out_channels, ho, wo, 1, dr1);
    relu_mask(dr1, bc.z1);

    conv_backward(param(pre + ".conv1.weight"), gparam(pre + ".conv1.weight"),
                  gparam(pre + ".conv1.bias"), bc.out_channels, bc.in_channels, bc.col1, dr1, n,
                  &dcol);
    dx.assign(static_cast<std::size_t>(bc.in_channels) * bc.in_h * bc.in_w, 0.0);
    col2im_add(dcol, bc.in_channels, bc.in_h, bc.in_w, bc.stride, dx);

    for (int ch = 0; ch < std::min(bc.in_channels, bc.out_channels); ++ch)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox)
          dx[(static_cast<std::size_t>(ch) * bc.in_h + oy * bc.stride) * bc.in_w + ox * bc.stride] +=
              dy[(static_cast<std::size_t>(ch) * ho + oy) * wo + ox];
  }

  relu_mask(dx, c.a0);
  conv_backward(param("conv0.weight"), gparam("conv0.weight"), gparam("conv0.bias"),
                cfg.base_width, cfg.in_channels, c.col0, dx, c.h * c.w, nullptr);
}

}  // namespace clothscope::embed
