#include "clothscope/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>

namespace clothscope::spectral {

namespace {

int kernel_radius(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("sigma must be positive");
  return static_cast<int>(std::ceil(3.0 * sigma));
}

// Correlates each row of length n (elements `stride` apart) with a centred kernel.
void correlate_lines(const float* src, float* dst, int n, std::ptrdiff_t stride, int lines,
                     std::ptrdiff_t line_stride, const std::vector<double>& kernel) {
  const int r = static_cast<int>(kernel.size() / 2);
  std::vector<double> buf(n);
  for (int l = 0; l < lines; ++l) {
    const float* s = src + l * line_stride;
    float* d = dst + l * line_stride;
    for (int i = 0; i < n; ++i) buf[i] = s[i * stride];
    for (int i = 0; i < n; ++i) {
      double acc = 0.0;
      for (int t = -r; t <= r; ++t) acc += kernel[t + r] * buf[reflect_index(i + t, n)];
      d[i * stride] = static_cast<float>(acc);
    }
  }
}

// Per-frame separable filter: `kx` along width, then `ky` along height.
VideoVolume separable(const VideoVolume& v, const std::vector<double>& kx,
                      const std::vector<double>& ky) {
  VideoVolume tmp(v.channels, v.frames, v.height, v.width);
  VideoVolume out(v.channels, v.frames, v.height, v.width);
  for (int c = 0; c < v.channels; ++c)
    for (int t = 0; t < v.frames; ++t) {
      const float* s = v.frame(c, t).data();
      float* m = tmp.frame(c, t).data();
      float* d = out.frame(c, t).data();
      correlate_lines(s, m, v.width, 1, v.height, v.width, kx);
      correlate_lines(m, d, v.height, v.width, v.width, 1, ky);
    }
  return out;
}

}  // namespace

void FrontEndConfig::validate(int n_t) const {
  kernel_radius(sigma_t);
  kernel_radius(sigma_xy);
  if (pool < 1) throw std::invalid_argument("pool factor must be >= 1");
  if (!(fps > 0.0)) throw std::invalid_argument("fps must be positive");
  if (k < 1 || 2 * k >= n_t)
    throw std::invalid_argument("peak count k=" + std::to_string(k) + " must satisfy 1 <= k < N_t/2");
}

std::vector<double> gaussian_kernel(double sigma) {
  const int r = kernel_radius(sigma);
  std::vector<double> k(2 * r + 1);
  for (int i = -r; i <= r; ++i) k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
  const double sum = std::accumulate(k.begin(), k.end(), 0.0);
  for (double& x : k) x /= sum;
  return k;
}

std::vector<double> gaussian_derivative_kernel(double sigma) {
  const int r = kernel_radius(sigma);
  std::vector<double> k(2 * r + 1);
  double norm = 0.0;
  for (int i = -r; i <= r; ++i) {
    const double g = std::exp(-0.5 * i * i / (sigma * sigma));
    k[i + r] = i * g;
    norm += static_cast<double>(i) * i * g;
  }
  for (double& x : k) x /= norm;
  return k;
}

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

VideoVolume temporal_gaussian(const VideoVolume& v, double sigma_t) {
  const auto kernel = gaussian_kernel(sigma_t);
  if (v.frames < static_cast<int>(kernel.size()))
    throw std::invalid_argument("clip of " + std::to_string(v.frames) +
                                " frames is shorter than the temporal kernel (" +
                                std::to_string(kernel.size()) + ")");
  VideoVolume out(v.channels, v.frames, v.height, v.width);
  const auto fs = static_cast<std::ptrdiff_t>(v.frame_size());
  for (int c = 0; c < v.channels; ++c)
    correlate_lines(v.frame(c, 0).data(), out.frame(c, 0).data(), v.frames, fs,
                    static_cast<int>(fs), 1, kernel);
  return out;
}

std::pair<VideoVolume, VideoVolume> spatial_derivatives(const VideoVolume& v, double sigma_xy) {
  const auto g = gaussian_kernel(sigma_xy);
  const auto d = gaussian_derivative_kernel(sigma_xy);
  const int len = static_cast<int>(g.size());
  if (v.height < len || v.width < len)
    throw std::invalid_argument("frame " + std::to_string(v.height) + "x" + std::to_string(v.width) +
                                " is smaller than the spatial kernel (" + std::to_string(len) + ")");
  return {separable(v, d, g), separable(v, g, d)};
}

VideoVolume maxpool(const VideoVolume& v, int factor) {
  if (factor < 1) throw std::invalid_argument("pool factor must be >= 1");
  if (v.height % factor != 0 || v.width % factor != 0)
    throw std::invalid_argument("frame " + std::to_string(v.height) + "x" + std::to_string(v.width) +
                                " is not divisible by the pool factor " + std::to_string(factor));
  const int h = v.height / factor, w = v.width / factor;
  VideoVolume out(v.channels, v.frames, h, w);
  for (int c = 0; c < v.channels; ++c)
    for (int t = 0; t < v.frames; ++t)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          float m = v.at(c, t, y * factor, x * factor);
          for (int dy = 0; dy < factor; ++dy)
            for (int dx = 0; dx < factor; ++dx)
              m = std::max(m, v.at(c, t, y * factor + dy, x * factor + dx));
          out.at(c, t, y, x) = m;
        }
  return out;
}

std::vector<double> hann_window(int n, Window window) {
  if (n < 2) throw std::invalid_argument("window length must be >= 2");
  const double denom = window == Window::hann_periodic ? n : n - 1;
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) w[i] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * i / denom));
  return w;
}

PeriodogramPlan::PeriodogramPlan(int n, Window window) : n_(n) {
  if (n < 4) throw std::invalid_argument("periodogram needs at least 4 samples");
  window_ = hann_window(n, window);
  twiddle_.resize(n);
  for (int m = 0; m < n; ++m)
    twiddle_[m] = std::polar(1.0, -2.0 * std::numbers::pi * m / n);
}

void PeriodogramPlan::compute(std::span<const double> signal, std::span<double> out) const {
  if (static_cast<int>(signal.size()) != n_ || static_cast<int>(out.size()) != bins())
    throw std::invalid_argument("periodogram buffer size mismatch");
  const double mean = std::accumulate(signal.begin(), signal.end(), 0.0) / n_;
  std::vector<double> x(n_);
  for (int i = 0; i < n_; ++i) x[i] = window_[i] * (signal[i] - mean);
  for (int b = 0; b < bins(); ++b) {
    double re = 0.0, im = 0.0;
    int m = 0;
    for (int i = 0; i < n_; ++i) {
      re += x[i] * twiddle_[m].real();
      im += x[i] * twiddle_[m].imag();
      m += b;
      if (m >= n_) m -= n_;
    }
    out[b] = (re * re + im * im) / n_;
  }
}

std::vector<double> periodogram(std::span<const double> signal, Window window) {
  const PeriodogramPlan plan(static_cast<int>(signal.size()), window);
  std::vector<double> out(plan.bins());
  plan.compute(signal, out);
  return out;
}

std::vector<Peak> topk_peaks(std::span<const double> spectrum, int k, int n_t) {
  const int bins = static_cast<int>(spectrum.size());
  if (bins != n_t / 2 + 1) throw std::invalid_argument("spectrum size does not match N_t");
  if (k < 1 || k > bins - 1)
    throw std::invalid_argument("k=" + std::to_string(k) + " exceeds the number of non-DC bins");
  std::vector<int> idx(bins - 1);
  std::iota(idx.begin(), idx.end(), 1);
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](int a, int b) {
    if (spectrum[a] != spectrum[b]) return spectrum[a] > spectrum[b];
    return a < b;
  });
  std::vector<Peak> peaks(k);
  for (int j = 0; j < k; ++j)
    peaks[j] = {spectrum[idx[j]], 2.0 * idx[j] / n_t, idx[j]};
  return peaks;
}

VideoVolume spectral_decompose(const VideoVolume& v, const FrontEndConfig& config) {
  config.validate(v.frames);
  const PeriodogramPlan plan(v.frames, config.window);
  const int C = v.channels, k = config.k;
  VideoVolume out(2 * k * C, 1, v.height, v.width);
  const std::size_t fs = v.frame_size();
  std::vector<double> signal(v.frames), spectrum(plan.bins());
  for (int c = 0; c < C; ++c)
    for (std::size_t p = 0; p < fs; ++p) {
      const float* base = v.frame(c, 0).data() + p;
      for (int t = 0; t < v.frames; ++t) signal[t] = base[static_cast<std::size_t>(t) * fs];
      plan.compute(signal, spectrum);
      const auto peaks = topk_peaks(spectrum, k, v.frames);
      for (int j = 0; j < k; ++j) {
        const double power = config.log_power ? std::log1p(peaks[j].power) : peaks[j].power;
        out.data[static_cast<std::size_t>(c * k + j) * fs + p] = static_cast<float>(power);
        out.data[static_cast<std::size_t>(k * C + c * k + j) * fs + p] =
            static_cast<float>(peaks[j].frequency);
      }
    }
  return out;
}

VideoVolume front_end(const VideoVolume& clip, const FrontEndConfig& config) {
  config.validate(clip.frames);
  const VideoVolume smooth = temporal_gaussian(clip, config.sigma_t);
  auto [dx, dy] = spatial_derivatives(smooth, config.sigma_xy);
  VideoVolume grads(2 * clip.channels, clip.frames, clip.height, clip.width);
  std::copy(dx.data.begin(), dx.data.end(), grads.data.begin());
  std::copy(dy.data.begin(), dy.data.end(), grads.data.begin() + static_cast<std::ptrdiff_t>(dx.data.size()));
  return spectral_decompose(maxpool(grads, config.pool), config);
}

}  // namespace clothscope::spectral
