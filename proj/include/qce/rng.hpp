#pragma once

// Counter-based SplitMix64 stream ("splitmix64-v1").
//
// Draw k (k = 0, 1, ...) of a stream with seed s is mix(s + (k + 1) * G),
// G = 0x9E3779B97F4A7C15, with the SplitMix64 finalizer as mix. Uniform
// doubles take the top 53 bits; normals use Box-Muller on two uniforms,
// returning the cosine branch only. Every platform with IEEE doubles and a
// correctly rounded libm log/cos/sqrt yields the same sequence.

#include <cmath>
#include <cstdint>
#include <numbers>

namespace qce {

inline constexpr const char* kRngName = "splitmix64-v1";

class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : seed_(seed) {}

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t next_u64() { return mix(seed_ + (++counter_) * 0x9E3779B97F4A7C15ULL); }

  /// Uniform on [0, 1).
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform01(); }

  double normal() {
    const double u1 = 1.0 - uniform01();  // (0, 1]
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

}  // namespace qce
