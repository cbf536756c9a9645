#pragma once

// Fourfold-anisotropic Cahn-Hilliard,
//   Gamma(theta) = 1 + alpha cos(4 theta) = 1 - 3 alpha + 4 alpha y6,
// lifted with the auxiliary cascade
//   y1 = ux^2, y2 = uy^2, y3 = (y1 + y2)^2, y4 = 1/y3, y5 = y1^2 + y2^2,
//   y6 = y4 y5, z1 = (u^2 - 1)/2, z2 = z1^2, phi1 = (Lap u)^2
// and integrated by the implicit midpoint rule. Each auxiliary update is the
// exact algebraic solution of its midpoint line, so the defining relations
// are carried from step to step up to roundoff.

#include <algorithm>
#include <cmath>
#include <sstream>
#include <utility>

#include "qce/ch_iso.hpp"
#include "qce/fixedpoint.hpp"
#include "qce/params.hpp"
#include "qce/spectral_grid.hpp"

namespace qce {

struct AnisoState {
  GridField U;
  GridField Y1, Y2, Y3, Y4, Y5, Y6;
  GridField Z1, Z2, Phi1;
  double delta_reg = 0.0;  // Y4 = 1/(Y3 + delta_reg) is carried exactly
};

/// Spectral first derivatives and Laplacian of one field.
struct Derivatives {
  GridField ux, uy, lap;
};

inline Derivatives derivatives(SpectralWorkspace& ws, const GridField& U) {
  const Spectrum s = ws.forward(U);
  Spectrum sx = s, sy = s, sl = s;
  ws.apply_dx(sx);
  ws.apply_dy(sy);
  ws.apply_laplacian_power(sl, 1);
  return {ws.inverse(sx), ws.inverse(sy), ws.inverse(sl)};
}

/// Regularization added to y3 when forming y4 = 1/(y3 + delta) at t = 0.
inline constexpr double kDefaultDeltaReg = 1e-12;

inline AnisoState init_aniso(SpectralWorkspace& ws, const GridField& U0, const AnisoParams& p,
                             double delta_reg = kDefaultDeltaReg) {
  U0.require_finite("init_aniso");
  if (!(delta_reg >= 0.0)) throw InvalidArgument("delta_reg must be >= 0");
  (void)p;
  const Derivatives d = derivatives(ws, U0);
  const Grid& g = U0.grid();
  AnisoState s{U0,          GridField(g), GridField(g), GridField(g), GridField(g), GridField(g),
               GridField(g), GridField(g), GridField(g), GridField(g)};
  for (std::size_t k = 0; k < U0.size(); ++k) {
    const double y1 = d.ux[k] * d.ux[k];
    const double y2 = d.uy[k] * d.uy[k];
    const double y3 = (y1 + y2) * (y1 + y2);
    const double y4 = 1.0 / (y3 + delta_reg);
    const double y5 = y1 * y1 + y2 * y2;
    const double z1 = 0.5 * (U0[k] * U0[k] - 1.0);
    s.Y1[k] = y1;
    s.Y2[k] = y2;
    s.Y3[k] = y3;
    s.Y4[k] = y4;
    s.Y5[k] = y5;
    s.Y6[k] = y4 * y5;
    s.Z1[k] = z1;
    s.Z2[k] = z1 * z1;
    s.Phi1[k] = d.lap[k] * d.lap[k];
  }
  s.delta_reg = delta_reg;
  for (const GridField* f : {&s.Y3, &s.Y4, &s.Y5, &s.Y6})
    f->require_finite("init_aniso auxiliary cascade");
  return s;
}

/// Gamma = 1 - 3 alpha + 4 alpha Y6, pointwise.
inline GridField gamma_from_y6(const GridField& Y6, double alpha) {
  GridField g = Y6;
  g.apply([alpha](double y6) { return 1.0 - 3.0 * alpha + 4.0 * alpha * y6; });
  return g;
}

class SingularUpdate : public Error {
 public:
  SingularUpdate(std::size_t i, std::size_t j, double denominator)
      : Error(message(i, j, denominator)), i_(i), j_(j) {}
  std::size_t i() const { return i_; }
  std::size_t j() const { return j_; }

 private:
  static std::string message(std::size_t i, std::size_t j, double d) {
    std::ostringstream os;
    os << "singular y4 update at grid point (" << i << ", " << j << "), denominator " << d;
    return os.str();
  }
  std::size_t i_, j_;
};

/// Auxiliary fields at n+1 given the previous state and U_next; the
/// derivatives of both levels are passed in so callers can reuse them.
inline AnisoState aux_update(const AnisoState& prev, const Derivatives& d0, const GridField& U_next,
                             const Derivatives& d1) {
  prev.U.require_same_grid(U_next);
  const Grid& g = U_next.grid();
  AnisoState s{U_next,       GridField(g), GridField(g), GridField(g), GridField(g), GridField(g),
               GridField(g), GridField(g), GridField(g), GridField(g), prev.delta_reg};
  for (std::size_t k = 0; k < U_next.size(); ++k) {
    // (a1^2 - a0^2) written as (a1 + a0)(a1 - a0), i.e. 2 a_half * delta a.
    auto sqdiff = [](double a1, double a0) { return (a1 + a0) * (a1 - a0); };
    const double y1 = prev.Y1[k] + sqdiff(d1.ux[k], d0.ux[k]);
    const double y2 = prev.Y2[k] + sqdiff(d1.uy[k], d0.uy[k]);
    const double y3 = prev.Y3[k] + sqdiff(y1 + y2, prev.Y1[k] + prev.Y2[k]);
    const double denom = 1.0 + prev.Y4[k] * (y3 - prev.Y3[k]);
    if (!(denom > 0.0)) throw SingularUpdate(k / g.ny, k % g.ny, denom);
    const double y4 = prev.Y4[k] / denom;
    const double y5 = prev.Y5[k] + sqdiff(y1, prev.Y1[k]) + sqdiff(y2, prev.Y2[k]);
    const double y6 = prev.Y6[k] + 0.5 * (y4 + prev.Y4[k]) * (y5 - prev.Y5[k]) +
                      0.5 * (y5 + prev.Y5[k]) * (y4 - prev.Y4[k]);
    const double z1 = prev.Z1[k] + 0.5 * sqdiff(U_next[k], prev.U[k]);
    s.Y1[k] = y1;
    s.Y2[k] = y2;
    s.Y3[k] = y3;
    s.Y4[k] = y4;
    s.Y5[k] = y5;
    s.Y6[k] = y6;
    s.Z1[k] = z1;
    s.Z2[k] = prev.Z2[k] + sqdiff(z1, prev.Z1[k]);
    s.Phi1[k] = prev.Phi1[k] + sqdiff(d1.lap[k], d0.lap[k]);
  }
  return s;
}

inline AnisoState aux_update(SpectralWorkspace& ws, const AnisoState& prev,
                             const GridField& U_next) {
  return aux_update(prev, derivatives(ws, prev.U), U_next, derivatives(ws, U_next));
}

/// How the weight Psi multiplying delta Gamma is formed in the chemical
/// potential. `average` uses the mean of the n and n+1 densities and makes the
/// discrete energy law an identity; `midpoint` evaluates the densities at the
/// midpoint state and is exact only up to O(dt^2).
enum class PsiForm { average, midpoint };

struct AnisoMuTerms {
  GridField A, Bx, By, C;
};

/// Pointwise terms of the chemical potential, mu = A - Dx Bx - Dy By + Lap C.
inline AnisoMuTerms mu_aniso_terms(const AnisoState& prev, const Derivatives& d0,
                                   const AnisoState& next, const Derivatives& d1,
                                   const AnisoParams& p, PsiForm form = PsiForm::average) {
  const Grid& g = next.U.grid();
  AnisoMuTerms t{GridField(g), GridField(g), GridField(g), GridField(g)};
  const double alpha = p.alpha();
  const double ie2 = p.model.inv_eps2();
  const double beta = p.model.beta;
  for (std::size_t k = 0; k < g.size(); ++k) {
    const double u0 = prev.U[k], u1 = next.U[k];
    const double uh = 0.5 * (u0 + u1);
    const double uxh = 0.5 * (d0.ux[k] + d1.ux[k]);
    const double uyh = 0.5 * (d0.uy[k] + d1.uy[k]);
    const double lh = 0.5 * (d0.lap[k] + d1.lap[k]);
    const double y1h = 0.5 * (prev.Y1[k] + next.Y1[k]);
    const double y2h = 0.5 * (prev.Y2[k] + next.Y2[k]);
    const double y4h = 0.5 * (prev.Y4[k] + next.Y4[k]);
    const double y5h = 0.5 * (prev.Y5[k] + next.Y5[k]);
    const double gam = 1.0 - 3.0 * alpha + 2.0 * alpha * (prev.Y6[k] + next.Y6[k]);

    double psi;
    if (form == PsiForm::average) {
      psi = 0.25 * (d0.ux[k] * d0.ux[k] + d1.ux[k] * d1.ux[k] + d0.uy[k] * d0.uy[k] +
                    d1.uy[k] * d1.uy[k]) +
            0.5 * ie2 * (double_well(u0) + double_well(u1)) +
            0.25 * beta * (d0.lap[k] * d0.lap[k] + d1.lap[k] * d1.lap[k]);
    } else {
      psi = 0.5 * (uxh * uxh + uyh * uyh) + ie2 * double_well(uh) + 0.5 * beta * lh * lh;
    }
    const double kk = y5h * next.Y4[k] * prev.Y4[k] * (y1h + y2h);
    const double bxt = 16.0 * alpha * psi * uxh * (y4h * y1h - kk);
    const double byt = 16.0 * alpha * psi * uyh * (y4h * y2h - kk);
    // F(u1) - F(u0) = f_half (u1 - u0) with f_half = (u1^2 + u0^2 - 2)(u1 + u0)/4.
    const double fh = 0.25 * (u1 * u1 + u0 * u0 - 2.0) * (u1 + u0);
    t.A[k] = ie2 * gam * fh;
    t.Bx[k] = gam * uxh + bxt;
    t.By[k] = gam * uyh + byt;
    t.C[k] = beta * gam * lh;
  }
  return t;
}

/// Spectrum of mu = A - Dx Bx - Dy By + Lap C.
inline Spectrum mu_aniso_spectrum(SpectralWorkspace& ws, const AnisoMuTerms& t) {
  Spectrum a = ws.forward(t.A);
  Spectrum bx = ws.forward(t.Bx);
  Spectrum by = ws.forward(t.By);
  Spectrum c = ws.forward(t.C);
  ws.apply_dx(bx);
  ws.apply_dy(by);
  ws.apply_laplacian_power(c, 1);
  for (std::size_t k = 0; k < a.size(); ++k) a[k] += c[k] - bx[k] - by[k];
  return a;
}

inline GridField mu_aniso(SpectralWorkspace& ws, const AnisoState& prev, const AnisoState& next,
                          const AnisoParams& p, PsiForm form = PsiForm::average) {
  prev.U.require_same_grid(next.U);
  const Derivatives d0 = derivatives(ws, prev.U);
  const Derivatives d1 = derivatives(ws, next.U);
  return ws.inverse(mu_aniso_spectrum(ws, mu_aniso_terms(prev, d0, next, d1, p, form)));
}

/// 1/2 |U|^2_{1,h,Gamma} + eps^-2 (Gamma F(U), 1)_h + beta/2 |Lap U|^2_{h,Gamma},
/// with Gamma taken from the state's Y6.
inline double energy_aniso(SpectralWorkspace& ws, const AnisoState& s, const AnisoParams& p) {
  const Derivatives d = derivatives(ws, s.U);
  const Grid& g = s.U.grid();
  GridField density(g);
  const double ie2 = p.model.inv_eps2();
  for (std::size_t k = 0; k < g.size(); ++k) {
    const double gam = 1.0 - 3.0 * p.alpha() + 4.0 * p.alpha() * s.Y6[k];
    density[k] = gam * (0.5 * (d.ux[k] * d.ux[k] + d.uy[k] * d.uy[k]) + ie2 * double_well(s.U[k]) +
                        0.5 * p.model.beta * d.lap[k] * d.lap[k]);
  }
  return sum_h(density);
}

/// Energy with Gamma(atan2(Uy, Ux)) = 1 + alpha cos(4 theta) evaluated
/// directly. Points with |grad U| below `min_grad` use Gamma = 1 - 3 alpha,
/// the value the regularized cascade assigns there.
inline double energy_aniso_direct(SpectralWorkspace& ws, const GridField& U, const AnisoParams& p,
                                  double min_grad = 0.0) {
  const Derivatives d = derivatives(ws, U);
  GridField density(U.grid());
  const double ie2 = p.model.inv_eps2();
  for (std::size_t k = 0; k < U.size(); ++k) {
    const double gnorm = std::hypot(d.ux[k], d.uy[k]);
    const double gam = gnorm > min_grad ? p.gamma(std::atan2(d.uy[k], d.ux[k]))
                                        : 1.0 - 3.0 * p.alpha();
    density[k] = gam * (0.5 * (d.ux[k] * d.ux[k] + d.uy[k] * d.uy[k]) + ie2 * double_well(U[k]) +
                        0.5 * p.model.beta * d.lap[k] * d.lap[k]);
  }
  return sum_h(density);
}

/// Max deviation of each auxiliary from its defining expression.
struct AnisoDrift {
  double y1 = 0, y2 = 0, y3 = 0, y5 = 0, z1 = 0, z2 = 0, phi1 = 0;
  double reciprocal = 0;  // |Y4 Y3 - 1| over points with Y3 >= threshold
  double reciprocal_regularized = 0;  // |Y4 (Y3 + delta_reg) - 1| everywhere
  double y6 = 0;          // |Y6 - Y4 Y5|

  double max_square_type() const { return std::max({y1, y2, y3, y5, z1, z2, phi1}); }
};

inline AnisoDrift aniso_drift(SpectralWorkspace& ws, const AnisoState& s,
                              double reciprocal_threshold = 1e-8) {
  const Derivatives d = derivatives(ws, s.U);
  AnisoDrift r;
  auto upd = [](double& m, double v) { m = std::max(m, std::abs(v)); };
  for (std::size_t k = 0; k < s.U.size(); ++k) {
    const double y1 = d.ux[k] * d.ux[k], y2 = d.uy[k] * d.uy[k];
    const double z1 = 0.5 * (s.U[k] * s.U[k] - 1.0);
    upd(r.y1, s.Y1[k] - y1);
    upd(r.y2, s.Y2[k] - y2);
    upd(r.y3, s.Y3[k] - (s.Y1[k] + s.Y2[k]) * (s.Y1[k] + s.Y2[k]));
    upd(r.y5, s.Y5[k] - (s.Y1[k] * s.Y1[k] + s.Y2[k] * s.Y2[k]));
    upd(r.z1, s.Z1[k] - z1);
    upd(r.z2, s.Z2[k] - s.Z1[k] * s.Z1[k]);
    upd(r.phi1, s.Phi1[k] - d.lap[k] * d.lap[k]);
    upd(r.y6, s.Y6[k] - s.Y4[k] * s.Y5[k]);
    if (s.Y3[k] >= reciprocal_threshold) upd(r.reciprocal, s.Y4[k] * s.Y3[k] - 1.0);
    upd(r.reciprocal_regularized, s.Y4[k] * (s.Y3[k] + s.delta_reg) - 1.0);
  }
  return r;
}

/// Max |Z2 - F(U)|: agreement of the lifted and primal bulk densities.
inline double bulk_consistency(const AnisoState& s) {
  double m = 0.0;
  for (std::size_t k = 0; k < s.U.size(); ++k) m = std::max(m, std::abs(s.Z2[k] - double_well(s.U[k])));
  return m;
}

/// Advances AnisoState by the midpoint scheme. The frozen symbol starts at
/// the isotropic lower bound; when the iteration fails it is stiffened by
/// `escalation` up to `max_escalations` times. Only the map changes, not its
/// fixed point.
class AnisoStepper {
 public:
  AnisoStepper(SpectralWorkspace& ws, AnisoParams p, PsiForm form = PsiForm::average,
               int max_escalations = 12, double escalation = 2.0)
      : ws_(ws), p_(p), form_(form), max_escalations_(max_escalations), escalation_(escalation) {
    p_.validate_for_stepping();
    if (max_escalations < 0 || !(escalation > 1.0)) throw InvalidArgument("bad symbol escalation");
    double scale = 1.0;
    for (int e = 0; e <= max_escalations; ++e, scale *= escalation)
      symbols_.push_back(build_symbol_aniso(p_, ws_, scale));
  }

  const AnisoParams& params() const { return p_; }
  /// Number of stiffened retries needed by the last step.
  int last_escalations() const { return last_escalations_; }

  AnisoState step(const AnisoState& prev, double dt, const FixedPointConfig& fp,
                  SolveReport* report = nullptr) {
    if (!(dt > 0.0)) throw InvalidArgument("dt must be positive");
    const Derivatives d0 = derivatives(ws_, prev.U);
    for (std::size_t e = 0;; ++e) {
      try {
        GridField U_next = solve(prev, d0, dt, fp, symbols_[e], report);
        last_escalations_ = static_cast<int>(e);
        return aux_update(prev, d0, U_next, derivatives(ws_, U_next));
      } catch (const StepFailure&) {
        if (e + 1 == symbols_.size()) throw;
      } catch (const NonFinite&) {
        if (e + 1 == symbols_.size()) throw;
      } catch (const SingularUpdate&) {
        if (e + 1 == symbols_.size()) throw;
      }
    }
  }

 private:
  GridField solve(const AnisoState& prev, const Derivatives& d0, double dt,
                  const FixedPointConfig& fp, const LinearSymbol& sym, SolveReport* report) {
    // N(mid) = M Lap mu - L mid, with U_next = 2 mid - U_n.
    auto nonlinear = [&](const GridField& mid) {
      Spectrum mh = ws_.forward(mid);
      Spectrum sx = mh, sy = mh, sl = mh;
      ws_.apply_dx(sx);
      ws_.apply_dy(sy);
      ws_.apply_laplacian_power(sl, 1);
      GridField u1 = mid * 2.0;
      u1 -= prev.U;
      Derivatives d1{ws_.inverse(sx) * 2.0 - d0.ux, ws_.inverse(sy) * 2.0 - d0.uy,
                     ws_.inverse(sl) * 2.0 - d0.lap};
      const AnisoState next = aux_update(prev, d0, u1, d1);
      Spectrum mu = mu_aniso_spectrum(ws_, mu_aniso_terms(prev, d0, next, d1, p_, form_));
      const auto& k2 = ws_.k2();
      for (std::size_t k = 0; k < mu.size(); ++k)
        mu[k] = -p_.model.mobility * k2[k] * mu[k] - sym.values[k] * mh[k];
      return mu;
    };
    SpectralMidpointMap<decltype(nonlinear)> T(ws_, sym, prev.U, dt, nonlinear);
    auto [U_next, rep] = fixed_point_solve(T, prev.U, fp);
    const double gap = norm_h(T(U_next) - U_next);
    const double q = std::clamp(rep.contraction, 0.0, 0.999);
    if (gap / (1.0 - q) > 100.0 * fp.fp_tol * (1.0 + norm_h(U_next))) {
      throw StepFailure("fixed point failed the post-solve residual check", rep);
    }
    if (report) *report = rep;
    return U_next;
  }

  SpectralWorkspace& ws_;
  AnisoParams p_;
  PsiForm form_;
  int max_escalations_;
  double escalation_;
  std::vector<LinearSymbol> symbols_;
  int last_escalations_ = 0;
};

inline AnisoState aniso_step(SpectralWorkspace& ws, const AnisoState& prev, double dt,
                             const AnisoParams& p, const FixedPointConfig& fp,
                             SolveReport* report = nullptr) {
  AnisoStepper stepper(ws, p);
  return stepper.step(prev, dt, fp, report);
}

}  // namespace qce
