#pragma once

#include <complex>
#include <span>
#include <utility>
#include <vector>

#include "clothscope/video.hpp"

namespace clothscope::spectral {

/// The periodic window is exactly phase-invariant on integer-period
/// sinusoids; the symmetric (N - 1) form is not.
enum class Window { hann_periodic, hann_symmetric };

struct FrontEndConfig {
  double sigma_t = 1.0;   // frames
  double sigma_xy = 2.0;  // px
  int pool = 2;
  int k = 1;
  double fps = 25.0;
  Window window = Window::hann_periodic;
  bool log_power = true;  // store log(1 + I) rather than I

  void validate(int n_t) const;
};

/// Kernels are truncated at radius ceil(3 sigma); taps are indexed -r..r.
std::vector<double> gaussian_kernel(double sigma);
/// First-order Gaussian derivative, scaled so that correlating it with the
/// ramp f(i) = i yields exactly 1.
std::vector<double> gaussian_derivative_kernel(double sigma);

/// Reflect-padding index map (-i -> i, n - 1 + i -> n - 1 - i).
int reflect_index(int i, int n);

VideoVolume temporal_gaussian(const VideoVolume& v, double sigma_t);

/// Returns (d/dx, d/dy) with x along the width, each smoothed by the
/// Gaussian across the other axis.
std::pair<VideoVolume, VideoVolume> spatial_derivatives(const VideoVolume& v, double sigma_xy);

VideoVolume maxpool(const VideoVolume& v, int factor);
inline VideoVolume maxpool2(const VideoVolume& v) { return maxpool(v, 2); }

std::vector<double> hann_window(int n, Window window = Window::hann_periodic);

/// Window and twiddle tables for one signal length.
class PeriodogramPlan {
 public:
  explicit PeriodogramPlan(int n, Window window = Window::hann_periodic);
  int size() const { return n_; }
  int bins() const { return n_ / 2 + 1; }
  const std::vector<double>& window() const { return window_; }
  /// out.size() == bins(); I[b] = |F[b]|^2 / N of the demeaned, windowed signal.
  void compute(std::span<const double> signal, std::span<double> out) const;

 private:
  int n_;
  std::vector<double> window_;
  std::vector<std::complex<double>> twiddle_;  // exp(-2 pi i m / N), m in [0, N)
};

std::vector<double> periodogram(std::span<const double> signal,
                                Window window = Window::hann_periodic);

struct Peak {
  double power = 0.0;
  double frequency = 0.0;  // normalised by the Nyquist frequency, in [0, 1]
  int bin = 0;
};

/// Strongest k non-DC bins, ties to the lower bin. `n_t` is the signal
/// length the spectrum came from.
std::vector<Peak> topk_peaks(std::span<const double> spectrum, int k, int n_t);

/// (C, N_t, H, W) -> (2kC, 1, H, W): channel c * k + j holds the j-th peak
/// power of input channel c, channel kC + c * k + j its frequency.
VideoVolume spectral_decompose(const VideoVolume& v, const FrontEndConfig& config);

/// Temporal Gaussian, spatial derivatives (dx channels then dy channels),
/// max-pooling, spectral decomposition.
VideoVolume front_end(const VideoVolume& clip, const FrontEndConfig& config);

}  // namespace clothscope::spectral
