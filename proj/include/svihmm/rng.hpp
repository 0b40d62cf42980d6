#pragma once

#include <cmath>
#include <cstdint>

namespace svihmm {

// SplitMix64: the seedable, splittable generator used everywhere random
// numbers are needed. The update and output functions are fully specified
// here, so every stream is bit-reproducible across platforms and compilers.
// Gaussian variates come from an explicit Box-Muller transform rather than
// std::normal_distribution, whose output sequence is implementation-defined.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform on [0, 1) with 53 bits of mantissa.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1]; safe as a log() argument.
  double uniform_pos() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  }

  // Uniform integer in [0, n). Multiply-shift; the modulo bias at any n we
  // ever pass (n << 2^64) is far below statistical resolution.
  std::uint64_t uniform_below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Standard normal via Box-Muller. Consumes two uniforms and discards the
  // second variate, keeping the draw count per call fixed.
  double normal() {
    const double u = uniform_pos();
    const double v = uniform();
    const double r = std::sqrt(-2.0 * std::log(u));
    return r * std::cos(6.283185307179586476925286766559 * v);
  }

  // Derive an independent stream.
  SplitMix64 split() { return SplitMix64(next_u64() ^ 0x6a09e667f3bcc909ULL); }

 private:
  std::uint64_t state_;
};

}  // namespace svihmm
