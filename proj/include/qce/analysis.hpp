#pragma once

// Linear stability, amplification factors and post-processing diagnostics.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qce/error.hpp"
#include "qce/params.hpp"
#include "qce/spectral_grid.hpp"

namespace qce {

/// Bulk potential with value and first two derivatives.
///   double_well:   F = (u^2 - 1)^2 / 4
///   flory_huggins: F = theta/2 [(1+u) ln(1+u) + (1-u) ln(1-u)] - theta_c/2 u^2, |u| < 1
///   sixth_order:   F = a u^6 + b u^4 + c u^2
struct PotentialSpec {
  enum class Kind { double_well, flory_huggins, sixth_order };
  Kind kind = Kind::double_well;
  double theta = 0.0, theta_c = 0.0;
  double a = 0.0, b = 0.0, c = 0.0;

  static PotentialSpec double_well() { return {}; }
  static PotentialSpec flory_huggins(double theta, double theta_c) {
    PotentialSpec p;
    p.kind = Kind::flory_huggins;
    p.theta = theta;
    p.theta_c = theta_c;
    return p;
  }
  static PotentialSpec sixth_order(double a, double b, double c) {
    PotentialSpec p;
    p.kind = Kind::sixth_order;
    p.a = a;
    p.b = b;
    p.c = c;
    return p;
  }

  void check_domain(double u) const {
    if (!std::isfinite(u)) throw InvalidArgument("potential argument is not finite");
    if (kind == Kind::flory_huggins && !(std::abs(u) < 1.0))
      throw InvalidArgument("Flory-Huggins potential requires |u| < 1");
  }

  double F(double u) const {
    check_domain(u);
    switch (kind) {
      case Kind::double_well: return 0.25 * (u * u - 1.0) * (u * u - 1.0);
      case Kind::flory_huggins:
        return 0.5 * theta * ((1 + u) * std::log1p(u) + (1 - u) * std::log1p(-u)) -
               0.5 * theta_c * u * u;
      case Kind::sixth_order: return a * std::pow(u, 6) + b * std::pow(u, 4) + c * u * u;
    }
    return 0.0;
  }
  double dF(double u) const {
    check_domain(u);
    switch (kind) {
      case Kind::double_well: return u * u * u - u;
      case Kind::flory_huggins: return 0.5 * theta * (std::log1p(u) - std::log1p(-u)) - theta_c * u;
      case Kind::sixth_order: return 6 * a * std::pow(u, 5) + 4 * b * u * u * u + 2 * c * u;
    }
    return 0.0;
  }
  double d2F(double u) const {
    check_domain(u);
    switch (kind) {
      case Kind::double_well: return 3.0 * u * u - 1.0;
      case Kind::flory_huggins: return theta / (1.0 - u * u) - theta_c;
      case Kind::sixth_order: return 30 * a * std::pow(u, 4) + 12 * b * u * u + 2 * c;
    }
    return 0.0;
  }
};

/// Homogeneous state u0 and the parameters of its linearization.
struct DispersionSpec {
  ModelParams model;
  double u0 = 0.0;
  PotentialSpec potential;
  std::optional<GammaSpec> gamma;

  void validate() const {
    model.validate();
    potential.check_domain(u0);
  }
  double fpp() const { return potential.d2F(u0); }
};

inline double lambda_iso(const DispersionSpec& s, double k) {
  if (!(k >= 0.0)) throw InvalidArgument("wavenumber must be non-negative");
  const double k2 = k * k;
  return -s.model.mobility * k2 * (k2 + s.model.inv_eps2() * s.fpp() + s.model.beta * k2 * k2);
}

/// Gamma at the direction of (kx, ky); the wavevector must be nonzero.
inline double gamma_of_wavevector(const GammaSpec& g, double kx, double ky) {
  const double k2 = kx * kx + ky * ky;
  if (g.fold == Fold::fourfold) {
    return 1.0 + g.alpha * (kx * kx * kx * kx - 6.0 * kx * kx * ky * ky + ky * ky * ky * ky) / (k2 * k2);
  }
  return 1.0 + g.alpha * (kx * kx - ky * ky) / k2;
}

inline double lambda_aniso(const DispersionSpec& s, double kx, double ky) {
  if (kx == 0.0 && ky == 0.0) return 0.0;
  const double k = std::hypot(kx, ky);
  const double base = lambda_iso(s, k);
  return s.gamma ? base * gamma_of_wavevector(*s.gamma, kx, ky) : base;
}

/// Open band (0, k_max) of growing wavenumbers, empty when F''(u0) >= 0.
inline std::optional<std::pair<double, double>> unstable_band(const DispersionSpec& s) {
  const double f2 = s.fpp();
  if (f2 >= 0.0) return std::nullopt;
  const double a = -s.model.inv_eps2() * f2;  // > 0
  if (s.model.beta == 0.0) return std::make_pair(0.0, std::sqrt(a));
  // Positive root of beta s^2 + s - a = 0, written without cancellation.
  const double sp = 2.0 * a / (1.0 + std::sqrt(1.0 + 4.0 * s.model.beta * a));
  return std::make_pair(0.0, std::sqrt(sp));
}

enum class Method { EE, IE, IM, exact };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::EE: return "EE";
    case Method::IE: return "IE";
    case Method::IM: return "IM";
    case Method::exact: return "exact";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  if (s == "EE") return Method::EE;
  if (s == "IE") return Method::IE;
  if (s == "IM") return Method::IM;
  if (s == "exact") return Method::exact;
  throw InvalidArgument("unknown method '" + s + "' (expected EE, IE, IM or exact)");
}

/// Per-step amplification of a linear mode with rate lambda.
inline double amplification_from_rate(Method m, double lambda, double dt) {
  if (!(dt > 0.0)) throw InvalidArgument("dt must be positive");
  const double z = dt * lambda;
  switch (m) {
    case Method::EE: return 1.0 + z;
    case Method::IE:
      if (1.0 - z == 0.0) throw SingularConstraint("implicit Euler amplification has a pole here");
      return 1.0 / (1.0 - z);
    case Method::IM:
      if (1.0 - 0.5 * z == 0.0) throw SingularConstraint("midpoint amplification has a pole here");
      return (1.0 + 0.5 * z) / (1.0 - 0.5 * z);
    case Method::exact: return std::exp(z);
  }
  return 0.0;
}

inline double amplification(Method m, const DispersionSpec& s, double kx, double ky, double dt) {
  return amplification_from_rate(m, lambda_aniso(s, kx, ky), dt);
}

struct SweepRow {
  double kx, ky, value;
};

/// Samples [-kmax, kmax]^2 with n points per axis: lambda when growth is
/// set, otherwise the amplification factor of the method.
inline std::vector<SweepRow> dispersion_sweep(const DispersionSpec& s, Method m, double dt,
                                              double kmax, std::size_t n, bool growth = false) {
  if (n < 2 || !(kmax > 0.0)) throw InvalidArgument("sweep requires n >= 2 and kmax > 0");
  std::vector<SweepRow> rows;
  rows.reserve(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    const double kx = -kmax + 2.0 * kmax * static_cast<double>(i) / static_cast<double>(n - 1);
    for (std::size_t j = 0; j < n; ++j) {
      const double ky = -kmax + 2.0 * kmax * static_cast<double>(j) / static_cast<double>(n - 1);
      const double v = growth ? lambda_aniso(s, kx, ky) : amplification(m, s, kx, ky, dt);
      rows.push_back({kx, ky, v});
    }
  }
  return rows;
}

enum class Stability { stable, unstable };

inline Stability spinodal_classify(const PotentialSpec& p, double u0) {
  return p.d2F(u0) < 0.0 ? Stability::unstable : Stability::stable;
}

/// Surface stiffness Gamma + Gamma_theta_theta = 1 + alpha (1 - m^2) cos(m theta).
inline double stiffness(const GammaSpec& g, double theta) {
  const int m = fold_order(g.fold);
  return 1.0 + g.alpha * (1.0 - m * m) * std::cos(m * theta);
}

inline double critical_alpha(const GammaSpec& g) {
  const int m = fold_order(g.fold);
  return 1.0 / (m * m - 1.0);
}

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  std::size_t samples = 0;
  double t0 = 0.0, t1 = 0.0;
};

namespace detail {

inline LineFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double mx = 0, my = 0;
  for (std::size_t k = 0; k < n; ++k) {
    mx += x[k];
    my += y[k];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t k = 0; k < n; ++k) {
    sxx += (x[k] - mx) * (x[k] - mx);
    sxy += (x[k] - mx) * (y[k] - my);
    syy += (y[k] - my) * (y[k] - my);
  }
  if (!(sxx > 0.0)) throw InvalidArgument("fit abscissae are all equal");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
  f.samples = n;
  return f;
}

}  // namespace detail

/// Slope of log E against log t over samples with t in [t0, t1].
inline LineFit coarsening_slope(const std::vector<double>& times, const std::vector<double>& energies,
                                double t0, double t1) {
  if (times.size() != energies.size()) throw InvalidArgument("times and energies differ in length");
  if (!(t0 > 0.0) || !(t1 > t0)) throw InvalidArgument("fit window requires 0 < t0 < t1");
  std::vector<double> lx, ly;
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (times[k] < t0 || times[k] > t1) continue;
    if (!(energies[k] > 0.0)) throw InvalidArgument("non-positive energy in fit window");
    lx.push_back(std::log(times[k]));
    ly.push_back(std::log(energies[k]));
  }
  if (lx.size() < 10) {
    throw InvalidArgument("coarsening fit needs at least 10 samples in the window, got " +
                          std::to_string(lx.size()));
  }
  LineFit f = detail::least_squares(lx, ly);
  f.t0 = t0;
  f.t1 = t1;
  return f;
}

/// Fit over the final decade [t_last/10, t_last].
inline LineFit coarsening_slope(const std::vector<double>& times, const std::vector<double>& energies) {
  if (times.empty()) throw InvalidArgument("empty time series");
  const double t1 = times.back();
  return coarsening_slope(times, energies, t1 / 10.0, t1);
}

/// Observed order: slope of log error against log dt.
inline double temporal_order(const std::vector<double>& dts, const std::vector<double>& errors) {
  if (dts.size() != errors.size() || dts.size() < 2)
    throw InvalidArgument("temporal_order needs at least two (dt, error) pairs");
  std::vector<double> lx, ly;
  for (std::size_t k = 0; k < dts.size(); ++k) {
    if (k > 0 && !(dts[k] < dts[k - 1])) throw InvalidArgument("dt values must strictly decrease");
    if (!(dts[k] > 0.0) || !(errors[k] > 0.0)) throw InvalidArgument("dt and error must be positive");
    lx.push_back(std::log(dts[k]));
    ly.push_back(std::log(errors[k]));
  }
  return detail::least_squares(lx, ly).slope;
}

struct OrientationHistogram {
  std::vector<double> density;  // normalized so the bins sum to 1
  std::vector<std::pair<std::size_t, std::size_t>> gaps;  // inclusive bin runs, may wrap
  std::size_t band_cells = 0;

  std::size_t bins() const { return density.size(); }
  double bin_width() const { return 2.0 * std::numbers::pi / static_cast<double>(density.size()); }
  /// Center of bin b; bins are centered on -pi + b w so the axes fall mid-bin.
  double bin_angle(std::size_t b) const { return -std::numbers::pi + bin_width() * static_cast<double>(b); }
};

/// Circular runs of bins below `fraction` of the largest bin.
inline std::vector<std::pair<std::size_t, std::size_t>> find_gaps(const std::vector<double>& d,
                                                                   double fraction = 0.05) {
  const std::size_t n = d.size();
  std::vector<std::pair<std::size_t, std::size_t>> gaps;
  if (n == 0) return gaps;
  const double thr = fraction * *std::max_element(d.begin(), d.end());
  std::vector<bool> low(n);
  for (std::size_t b = 0; b < n; ++b) low[b] = d[b] < thr;
  if (std::all_of(low.begin(), low.end(), [](bool v) { return v; })) return {{0, n - 1}};
  // Start scanning just after a high bin so wrapped runs stay whole.
  std::size_t start = 0;
  while (low[start]) ++start;
  std::size_t b = 0;
  while (b < n) {
    const std::size_t i = (start + b) % n;
    if (!low[i]) {
      ++b;
      continue;
    }
    std::size_t len = 0;
    while (b + len < n && low[(start + b + len) % n]) ++len;
    gaps.emplace_back(i, (i + len - 1) % n);
    b += len;
  }
  return gaps;
}

/// Histogram of interface normal angles atan2(U_y, U_x) over cells with
/// |U| < band_threshold and |grad U| > 1e-6. n_bins should be a multiple of
/// 4 so that the axis directions sit at bin centers.
inline OrientationHistogram orientation_histogram(SpectralWorkspace& ws, const GridField& U,
                                                  double band_threshold = 0.9, std::size_t n_bins = 36,
                                                  double gap_fraction = 0.05) {
  if (!(band_threshold > 0.0 && band_threshold < 1.0))
    throw InvalidArgument("band_threshold must lie in (0, 1)");
  if (n_bins < 4) throw InvalidArgument("n_bins must be >= 4");
  U.require_finite("orientation_histogram");
  const GridField ux = ws.dx(U);
  const GridField uy = ws.dy(U);
  OrientationHistogram h;
  h.density.assign(n_bins, 0.0);
  const double w = 2.0 * std::numbers::pi / static_cast<double>(n_bins);
  for (std::size_t k = 0; k < U.size(); ++k) {
    if (std::abs(U[k]) >= band_threshold || std::hypot(ux[k], uy[k]) <= 1e-6) continue;
    const double th = std::atan2(uy[k], ux[k]);
    const auto b = static_cast<long>(std::floor((th + std::numbers::pi + 0.5 * w) / w));
    h.density[static_cast<std::size_t>(b) % n_bins] += 1.0;
    ++h.band_cells;
  }
  if (h.band_cells == 0) throw InvalidArgument("interface band is empty");
  for (auto& v : h.density) v /= static_cast<double>(h.band_cells);
  h.gaps = find_gaps(h.density, gap_fraction);
  return h;
}

}  // namespace qce
