#pragma once

// Isotropic Cahn-Hilliard with double-well potential F(u) = (u^2 - 1)^2 / 4,
// lifted with q = (u^2 - 1)/2 and integrated by the implicit midpoint rule:
//
//   (U1 - U0)/dt = M Lap mu,  mu = -Lap U + 2/eps^2 U.*Q + beta Lap^2 U   (at n+1/2)
//   (Q1 - Q0)/dt = U_half .* (U1 - U0)/dt
//
// The Q update is applied in closed form, Q1 = Q0 + U_half .* (U1 - U0).

#include <algorithm>
#include <cmath>
#include <utility>

#include "qce/fixedpoint.hpp"
#include "qce/params.hpp"
#include "qce/spectral_grid.hpp"

namespace qce {

struct IsoState {
  GridField U;
  GridField Q;
};

inline double double_well(double u) {
  const double a = u * u - 1.0;
  return 0.25 * a * a;
}

inline IsoState init_iso(const GridField& U0) {
  U0.require_finite("init_iso");
  GridField Q = U0;
  Q.apply([](double u) { return 0.5 * (u * u - 1.0); });
  return {U0, std::move(Q)};
}

/// mu = -Lap U + 2 eps^-2 U.*Q + beta Lap^2 U.
inline GridField mu_iso(SpectralWorkspace& ws, const GridField& U_half, const GridField& Q_half,
                        const ModelParams& p) {
  U_half.require_same_grid(Q_half);
  Spectrum s = ws.forward(U_half);
  const auto& k2 = ws.k2();
  for (std::size_t k = 0; k < s.size(); ++k) s[k] *= k2[k] + p.beta * k2[k] * k2[k];
  GridField mu = ws.inverse(s);
  GridField bulk = U_half * Q_half;
  bulk *= 2.0 * p.inv_eps2();
  mu += bulk;
  return mu;
}

/// Midpoint auxiliary Q_half = Q0 + U_half .* (U_half - U0), equivalent to
/// (Q0 + Q1)/2 with the closed-form Q update.
inline GridField q_half_iso(const IsoState& prev, const GridField& U_half) {
  GridField q = U_half - prev.U;
  q *= U_half;
  q += prev.Q;
  return q;
}

/// Scheme residual (U1 - U0)/dt - M Lap mu(U_half, Q_half).
inline GridField iso_residual(SpectralWorkspace& ws, const IsoState& prev, const GridField& U_next,
                              double dt, const ModelParams& p) {
  if (!(dt > 0.0)) throw InvalidArgument("dt must be positive");
  prev.U.require_same_grid(U_next);
  GridField U_half = (prev.U + U_next) * 0.5;
  const GridField Q_half = q_half_iso(prev, U_half);
  GridField lap_mu = ws.laplacian(mu_iso(ws, U_half, Q_half, p));
  GridField r = (U_next - prev.U) * (1.0 / dt);
  lap_mu *= p.mobility;
  r -= lap_mu;
  return r;
}

/// Energy in the lifted form -1/2 (Lap U, U) + eps^-2 |Q|^2 + beta/2 |Lap U|^2.
inline double energy_iso(SpectralWorkspace& ws, const IsoState& s, const ModelParams& p) {
  const GridField lap = ws.laplacian(s.U);
  return -0.5 * inner_h(lap, s.U) + p.inv_eps2() * inner_h(s.Q, s.Q) +
         0.5 * p.beta * inner_h(lap, lap);
}

/// Energy with the potential evaluated from U directly.
inline double energy_iso_primal(SpectralWorkspace& ws, const GridField& U, const ModelParams& p) {
  const GridField lap = ws.laplacian(U);
  GridField F = U;
  F.apply(double_well);
  return -0.5 * inner_h(lap, U) + p.inv_eps2() * sum_h(F) + 0.5 * p.beta * inner_h(lap, lap);
}

/// |Q - (U.^2 - 1)/2|_inf.
inline double casimir_drift_iso(const IsoState& s) {
  double m = 0.0;
  for (std::size_t k = 0; k < s.U.size(); ++k) {
    const double u = s.U[k];
    m = std::max(m, std::abs(s.Q[k] - 0.5 * (u * u - 1.0)));
  }
  return m;
}

/// Advances IsoState by the midpoint scheme; the nonlinear system is solved
/// in U only by Mann iteration on the map T with the frozen symbol
/// -M (k^4 + beta k^6).
class IsoStepper {
 public:
  IsoStepper(SpectralWorkspace& ws, ModelParams p) : ws_(ws), p_(p), sym_(build_symbol_iso(p, ws)) {}

  const ModelParams& params() const { return p_; }

  IsoState step(const IsoState& prev, double dt, const FixedPointConfig& fp,
                SolveReport* report = nullptr) {
    if (!(dt > 0.0)) throw InvalidArgument("dt must be positive");
    prev.U.require_same_grid(prev.Q);
    auto nonlinear = [this, &prev](const GridField& mid) {
      GridField b = q_half_iso(prev, mid);
      b *= mid;
      b *= 2.0 * p_.inv_eps2();
      Spectrum s = ws_.forward(b);
      const auto& k2 = ws_.k2();
      for (std::size_t k = 0; k < s.size(); ++k) s[k] *= -p_.mobility * k2[k];
      return s;
    };
    SpectralMidpointMap<decltype(nonlinear)> T(ws_, sym_, prev.U, dt, nonlinear);
    auto [U_next, rep] = fixed_point_solve(T, prev.U, fp);
    verify_fixed_point(T, U_next, rep, fp);
    if (report) *report = rep;

    GridField U_half = (prev.U + U_next) * 0.5;
    GridField Q_next = (U_next - prev.U) * U_half;
    Q_next += prev.Q;
    return {std::move(U_next), std::move(Q_next)};
  }

 private:
  template <class Map>
  static void verify_fixed_point(Map& T, const GridField& x, const SolveReport& rep,
                                 const FixedPointConfig& fp) {
    const double gap = norm_h(T(x) - x);
    const double q = std::clamp(rep.contraction, 0.0, 0.999);
    if (gap / (1.0 - q) > 100.0 * fp.fp_tol * (1.0 + norm_h(x))) {
      throw StepFailure("fixed point failed the post-solve residual check", rep);
    }
  }

  SpectralWorkspace& ws_;
  ModelParams p_;
  LinearSymbol sym_;
};

inline IsoState iso_step(SpectralWorkspace& ws, const IsoState& prev, double dt,
                         const ModelParams& p, const FixedPointConfig& fp,
                         SolveReport* report = nullptr) {
  IsoStepper stepper(ws, p);
  return stepper.step(prev, dt, fp, report);
}

}  // namespace qce
