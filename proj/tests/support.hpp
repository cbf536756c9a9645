#pragma once

#include <cmath>
#include <numbers>

#include "qce/rng.hpp"
#include "qce/spectral_grid.hpp"

namespace qce::test {

/// Random trigonometric polynomial with modes |kx|, |ky| <= kmax.
inline GridField smooth_random(const Grid& g, std::uint64_t seed, int kmax = 4) {
  SplitMix64 rng(seed);
  GridField f(g);
  const double sx = 2.0 * std::numbers::pi / g.lx(), sy = 2.0 * std::numbers::pi / g.ly();
  for (int a = -kmax; a <= kmax; ++a)
    for (int b = 0; b <= kmax; ++b) {
      const double c = rng.uniform(-1.0, 1.0) / (1 + a * a + b * b);
      const double ph = rng.uniform(0.0, 2.0 * std::numbers::pi);
      f += GridField::from_function(g, [&](double x, double y) {
        return c * std::cos(a * sx * (x - g.ax) + b * sy * (y - g.ay) + ph);
      });
    }
  return f;
}

inline GridField white_noise(const Grid& g, std::uint64_t seed) {
  SplitMix64 rng(seed);
  GridField f(g);
  for (std::size_t k = 0; k < f.size(); ++k) f[k] = rng.uniform(-1.0, 1.0);
  return f;
}

inline double max_abs_diff(const GridField& a, const GridField& b) { return norm_inf(a - b); }

}  // namespace qce::test
