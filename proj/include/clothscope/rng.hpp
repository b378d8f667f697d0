#pragma once

#include <cstdint>
#include <initializer_list>

namespace clothscope {

/// SplitMix64 finalizer. Used to derive independent per-task seeds from a
/// master seed; the constants are fixed so streams are identical on every
/// platform.
std::uint64_t mix64(std::uint64_t x);

/// Folds a list of integers into one seed: mix64(...mix64(mix64(a) ^ b)...).
std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts);

/// xoshiro256** generator with hand-rolled distributions. The standard
/// <random> distributions are implementation-defined, which would make
/// datasets differ between standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller (one value per call, no caching).
  double normal();
  bool coin() { return (next_u64() >> 63) != 0; }

 private:
  std::uint64_t s_[4];
};

}  // namespace clothscope
