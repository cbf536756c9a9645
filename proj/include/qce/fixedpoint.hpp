#pragma once

// Relaxed (Mann) fixed-point iteration for the implicit midpoint systems,
// built around the semi-implicit spectral map
//
//   T(X) = F^-1[ (1 - dt/2 L)^-1 ( (1 + dt/2 L) X_n^ + dt N((X + X_n)/2)^ ) ],
//
// where L is a frozen, diagonal-in-Fourier, non-positive linear symbol.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "qce/error.hpp"
#include "qce/params.hpp"
#include "qce/spectral_grid.hpp"

namespace qce {

enum class FixedPointMethod { mann, anderson, newton_krylov };

struct FixedPointConfig {
  double omega = 0.9;
  double fp_tol = 1e-11;
  int max_iter = 200;
  double divergence_factor = 1e3;
  FixedPointMethod method = FixedPointMethod::mann;
  int anderson_depth = 8;
  int krylov_dim = 40;

  void validate() const {
    if (!(omega > 0.0 && omega <= 1.0)) throw InvalidArgument("omega must lie in (0, 1]");
    if (!(fp_tol > 0.0)) throw InvalidArgument("fp_tol must be positive");
    if (max_iter < 1) throw InvalidArgument("max_iter must be >= 1");
    if (!(divergence_factor > 1.0)) throw InvalidArgument("divergence_factor must exceed 1");
    if (anderson_depth < 1) throw InvalidArgument("anderson_depth must be >= 1");
    if (krylov_dim < 1) throw InvalidArgument("krylov_dim must be >= 1");
  }
};

struct SolveReport {
  int iterations = 0;
  double residual = 0.0;     // last successive-iterate distance, relative
  double contraction = 0.0;  // geometric mean of successive distance ratios
  bool converged = false;
  bool diverged = false;
  std::vector<double> history;  // successive-iterate distances

  std::string summary() const {
    std::ostringstream os;
    os << "iterations=" << iterations << " residual=" << residual << " contraction=" << contraction
       << (converged ? " converged" : (diverged ? " diverged" : " not-converged"));
    return os.str();
  }
};

class StepFailure : public Error {
 public:
  StepFailure(const std::string& what, SolveReport report)
      : Error(what + " (" + report.summary() + ")"), report_(std::move(report)) {}
  const SolveReport& report() const { return report_; }

 private:
  SolveReport report_;
};

/// Per-wavenumber multiplier of the frozen linear part, half-spectrum order.
struct LinearSymbol {
  std::vector<double> values;

  /// Every CN denominator 1 - dt/2 L must be >= 1.
  void check() const {
    for (double v : values)
      if (!(v <= 0.0) || !std::isfinite(v)) throw InvalidArgument("linear symbol must be <= 0");
  }
};

/// L(k) = -M (k^4 + beta k^6): the stiff linear part of M Lap(mu).
inline LinearSymbol build_symbol_iso(const ModelParams& p, const SpectralWorkspace& ws) {
  p.validate();
  LinearSymbol s;
  s.values.resize(ws.spectral_size());
  const auto& k2 = ws.k2();
  for (std::size_t k = 0; k < k2.size(); ++k) {
    const double k4 = k2[k] * k2[k];
    s.values[k] = -p.mobility * (k4 + p.beta * k4 * k2[k]);
  }
  s.check();
  return s;
}

/// Isotropic symbol scaled by the lower bound 1 - 3 alpha of Gamma, times an
/// optional stiffening factor.
inline LinearSymbol build_symbol_aniso(const AnisoParams& p, const SpectralWorkspace& ws,
                                       double scale = 1.0) {
  if (!(p.alpha() < 1.0 / 3.0)) throw InvalidArgument("frozen anisotropic symbol needs alpha < 1/3");
  if (!(scale >= 1.0)) throw InvalidArgument("symbol scale must be >= 1");
  LinearSymbol s = build_symbol_iso(p.model, ws);
  const double gmin = (1.0 - 3.0 * p.alpha()) * scale;
  for (auto& v : s.values) v *= gmin;
  s.check();
  return s;
}

/// The map T on grid fields. `nonlinear(mid)` returns N(mid) either as a
/// GridField or directly as its Spectrum.
template <class Nonlinear>
class SpectralMidpointMap {
 public:
  SpectralMidpointMap(SpectralWorkspace& ws, const LinearSymbol& sym, const GridField& x_n,
                      double dt, Nonlinear nonlinear)
      : ws_(ws), x_n_(x_n), dt_(dt), nonlinear_(std::move(nonlinear)) {
    if (!(dt > 0.0)) throw InvalidArgument("dt must be positive");
    if (sym.values.size() != ws.spectral_size()) throw GridMismatch("symbol size mismatch");
    const Spectrum xh = ws_.forward(x_n);
    linear_part_.resize(xh.size());
    gain_.resize(xh.size());
    for (std::size_t k = 0; k < xh.size(); ++k) {
      const double half = 0.5 * dt * sym.values[k];
      gain_[k] = dt / (1.0 - half);
      linear_part_[k] = xh[k] * ((1.0 + half) / (1.0 - half));
    }
  }

  GridField operator()(const GridField& x) {
    GridField mid = x;
    mid += x_n_;
    mid *= 0.5;
    Spectrum nh = spectrum_of(nonlinear_(mid));
    for (std::size_t k = 0; k < nh.size(); ++k) nh[k] = linear_part_[k] + gain_[k] * nh[k];
    return ws_.inverse(nh);
  }

  const GridField& x_n() const { return x_n_; }

 private:
  Spectrum spectrum_of(Spectrum s) { return s; }
  Spectrum spectrum_of(const GridField& f) { return ws_.forward(f); }

  SpectralWorkspace& ws_;
  GridField x_n_;
  double dt_;
  Nonlinear nonlinear_;
  Spectrum linear_part_;
  std::vector<double> gain_;
};

/// One evaluation of T on grid fields.
template <class Nonlinear>
GridField apply_T(SpectralWorkspace& ws, const LinearSymbol& sym, Nonlinear nonlinear,
                  const GridField& x_n, const GridField& x, double dt) {
  SpectralMidpointMap<Nonlinear> t(ws, sym, x_n, dt, std::move(nonlinear));
  return t(x);
}

/// T for vectors already expressed in the symbol's eigenbasis (identity
/// transform); used for scalar and small diagonal test problems.
template <class Nonlinear>
std::vector<double> apply_T(const std::vector<double>& sym, Nonlinear&& nonlinear,
                            const std::vector<double>& x_n, const std::vector<double>& x,
                            double dt) {
  if (sym.size() != x_n.size() || x.size() != x_n.size()) throw InvalidArgument("size mismatch");
  std::vector<double> mid(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) mid[k] = 0.5 * (x[k] + x_n[k]);
  const std::vector<double> n = nonlinear(mid);
  std::vector<double> out(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (!(sym[k] <= 0.0)) throw InvalidArgument("linear symbol must be <= 0");
    const double half = 0.5 * dt * sym[k];
    out[k] = ((1.0 + half) * x_n[k] + dt * n[k]) / (1.0 - half);
  }
  return out;
}

namespace detail {

inline double vec_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline std::vector<double> vec_axpby(double a, const std::vector<double>& x, double b,
                                     const std::vector<double>& y) {
  std::vector<double> out(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = a * x[k] + b * y[k];
  return out;
}

inline GridField vec_axpby(double a, const GridField& x, double b, const GridField& y) {
  GridField out = x;
  out *= a;
  GridField t = y;
  t *= b;
  out += t;
  return out;
}

template <class V>
V vec_sub(const V& x, const V& y) {
  return vec_axpby(1.0, x, -1.0, y);
}

inline bool vec_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}
inline bool vec_finite(const GridField& f) { return f.all_finite(); }

inline double vec_norm_raw(const GridField& f) {
  double s = 0.0;
  for (std::size_t k = 0; k < f.size(); ++k) s += f[k] * f[k];
  return std::sqrt(s);
}
inline double vec_norm_raw(const std::vector<double>& v) { return vec_norm(v); }

inline double* vec_data(std::vector<double>& v) { return v.data(); }
inline double* vec_data(GridField& f) { return f.data(); }
inline const double* vec_data(const std::vector<double>& v) { return v.data(); }
inline const double* vec_data(const GridField& f) { return f.data(); }

}  // namespace detail

/// Geometric mean of successive ratios of a distance history.
inline double contraction_estimate(const std::vector<double>& history) {
  double log_sum = 0.0;
  int count = 0;
  for (std::size_t k = 1; k < history.size(); ++k) {
    if (history[k - 1] > 0.0 && history[k] > 0.0) {
      log_sum += std::log(history[k] / history[k - 1]);
      ++count;
    }
  }
  return count == 0 ? 0.0 : std::exp(log_sum / count);
}

/// Mann iteration X <- (1 - omega) X + omega T(X).
///
/// Stops when the successive-iterate distance drops below
/// fp_tol * (1 + |X|). A second exit accepts T(X) directly once the local
/// Lipschitz estimate q of T bounds its error, q/(1-q) |T(X) - X|, by the
/// same tolerance; for a constant map this returns the exact fixed point
/// after two evaluations regardless of omega.
///
/// Throws StepFailure on divergence (distance grows by divergence_factor,
/// or non-finite iterate) or when max_iter is exhausted.
template <class V, class Map, class Norm>
std::pair<V, SolveReport> mann_solve(Map&& T, V x, const FixedPointConfig& cfg, Norm&& norm) {
  cfg.validate();
  SolveReport rep;
  V tx_prev{};
  V x_prev{};
  bool have_prev = false;
  for (int m = 0; m < cfg.max_iter; ++m) {
    V tx = T(x);
    if (!detail::vec_finite(tx)) {
      rep.iterations = m + 1;
      rep.diverged = true;
      throw StepFailure("fixed-point map produced non-finite values", rep);
    }
    const double xnorm = norm(x);
    const double scale = cfg.fp_tol * (1.0 + xnorm);

    if (have_prev) {
      const double dx = norm(detail::vec_sub(x, x_prev));
      const double dtx = norm(detail::vec_sub(tx, tx_prev));
      const double gap = norm(detail::vec_sub(tx, x));
      if (dx > 0.0) {
        const double q = dtx / dx;
        if (q < 0.5 && q / (1.0 - q) * gap <= scale) {
          rep.iterations = m + 1;
          rep.history.push_back(gap);
          rep.residual = gap / (1.0 + xnorm);
          rep.converged = true;
          rep.contraction = contraction_estimate(rep.history);
          return {std::move(tx), std::move(rep)};
        }
      }
    }

    V next = detail::vec_axpby(1.0 - cfg.omega, x, cfg.omega, tx);
    const double step = norm(detail::vec_sub(next, x));
    rep.history.push_back(step);
    rep.iterations = m + 1;
    rep.residual = step / (1.0 + xnorm);
    tx_prev = std::move(tx);
    x_prev = std::move(x);
    x = std::move(next);
    have_prev = true;

    if (step <= scale) {
      rep.converged = true;
      rep.contraction = contraction_estimate(rep.history);
      return {std::move(x), std::move(rep)};
    }
    if (!std::isfinite(step) || step > cfg.divergence_factor * rep.history.front()) {
      rep.diverged = true;
      rep.contraction = contraction_estimate(rep.history);
      throw StepFailure("fixed-point iteration diverged", rep);
    }
  }
  rep.contraction = contraction_estimate(rep.history);
  throw StepFailure("fixed-point iteration did not converge within max_iter", rep);
}

/// Anderson-accelerated Mann iteration with a window of `anderson_depth`
/// previous residuals (Walker-Ni form). Mixing uses omega; converged once
/// |T(X) - X| <= fp_tol * (1 + |X|). The window is cleared whenever the
/// residual grows, so the first step after a restart is a plain Mann step.
template <class V, class Map, class Norm>
std::pair<V, SolveReport> anderson_solve(Map&& T, V x, const FixedPointConfig& cfg, Norm&& norm) {
  cfg.validate();
  const int depth = cfg.anderson_depth;
  SolveReport rep;
  std::vector<V> dF, dG;
  V f_prev{}, g_prev{};
  bool have_prev = false;
  double best = 0.0;
  for (int m = 0; m < cfg.max_iter; ++m) {
    V g = T(x);
    rep.iterations = m + 1;
    if (!detail::vec_finite(g)) {
      rep.diverged = true;
      rep.contraction = contraction_estimate(rep.history);
      throw StepFailure("fixed-point map produced non-finite values", rep);
    }
    V f = detail::vec_sub(g, x);
    const double fn = norm(f);
    const double xnorm = norm(x);
    rep.history.push_back(fn);
    rep.residual = fn / (1.0 + xnorm);
    if (fn <= cfg.fp_tol * (1.0 + xnorm)) {
      rep.converged = true;
      rep.contraction = contraction_estimate(rep.history);
      return {std::move(g), std::move(rep)};
    }
    if (m == 0) best = fn;
    if (!std::isfinite(fn) || fn > cfg.divergence_factor * best) {
      rep.diverged = true;
      rep.contraction = contraction_estimate(rep.history);
      throw StepFailure("fixed-point iteration diverged", rep);
    }
    if (have_prev && fn > norm(f_prev)) {
      dF.clear();
      dG.clear();
    } else if (have_prev) {
      dF.push_back(detail::vec_sub(f, f_prev));
      dG.push_back(detail::vec_sub(g, g_prev));
      if (static_cast<int>(dF.size()) > depth) {
        dF.erase(dF.begin());
        dG.erase(dG.begin());
      }
    }
    best = std::min(best, fn);

    V next = detail::vec_axpby(1.0 - cfg.omega, x, cfg.omega, g);
    if (!dF.empty()) {
      const std::size_t n = x.size();
      const std::size_t k = dF.size();
      Eigen::MatrixXd A(n, k);
      for (std::size_t c = 0; c < k; ++c)
        A.col(c) = Eigen::Map<const Eigen::VectorXd>(detail::vec_data(dF[c]), n);
      const Eigen::Map<const Eigen::VectorXd> fv(detail::vec_data(f), n);
      const Eigen::VectorXd gamma = A.colPivHouseholderQr().solve(fv);
      if (gamma.allFinite()) {
        double* out = detail::vec_data(next);
        for (std::size_t c = 0; c < k; ++c) {
          const double* dg = detail::vec_data(dG[c]);
          const double* df = detail::vec_data(dF[c]);
          for (std::size_t i = 0; i < n; ++i)
            out[i] -= gamma[c] * (dg[i] - (1.0 - cfg.omega) * df[i]);
        }
      }
    }
    f_prev = std::move(f);
    g_prev = std::move(g);
    x = std::move(next);
    have_prev = true;
  }
  rep.contraction = contraction_estimate(rep.history);
  throw StepFailure("fixed-point iteration did not converge within max_iter", rep);
}

template <class V, class Map>
auto mann_solve(Map&& T, V x, const FixedPointConfig& cfg) {
  if constexpr (std::is_same_v<V, GridField>) {
    return mann_solve(std::forward<Map>(T), std::move(x), cfg,
                      [](const GridField& f) { return norm_h(f); });
  } else {
    return mann_solve(std::forward<Map>(T), std::move(x), cfg,
                      [](const V& v) { return detail::vec_norm(v); });
  }
}

/// Inexact Newton on G(X) = X - T(X). Each linear system (I - T'(X)) s = -G(X)
/// is solved by one GMRES cycle with finite-difference Jacobian products;
/// T already carries the stiff linear part inverted, so I - T' needs no
/// further preconditioning. A backtracking line search keeps |G| decreasing.
template <class V, class Map, class Norm>
std::pair<V, SolveReport> newton_krylov_solve(Map&& T, V x, const FixedPointConfig& cfg,
                                               Norm&& norm) {
  cfg.validate();
  SolveReport rep;
  int evals = 0;
  auto eval = [&](const V& v) {
    ++evals;
    V t = T(v);
    if (!detail::vec_finite(t)) {
      rep.iterations = evals;
      rep.diverged = true;
      throw StepFailure("fixed-point map produced non-finite values", rep);
    }
    return t;
  };
  V tx = eval(x);
  V g = detail::vec_sub(x, tx);
  double gn = norm(g);
  const double first = gn;
  const std::size_t n = x.size();
  while (true) {
    rep.history.push_back(gn);
    rep.iterations = evals;
    rep.residual = gn / (1.0 + norm(x));
    if (gn <= cfg.fp_tol * (1.0 + norm(x))) {
      rep.converged = true;
      rep.contraction = contraction_estimate(rep.history);
      return {std::move(tx), std::move(rep)};
    }
    if (evals >= cfg.max_iter) break;
    if (!std::isfinite(gn) || gn > cfg.divergence_factor * first) {
      rep.diverged = true;
      rep.contraction = contraction_estimate(rep.history);
      throw StepFailure("Newton iteration diverged", rep);
    }

    // GMRES for (I - T') s = -g, one cycle of krylov_dim vectors.
    const double xn = norm(x);
    auto jv = [&](const V& v) {
      const double vn = norm(v);
      if (vn == 0.0) return v;
      const double h = 1e-7 * (1.0 + xn) / vn;
      V tp = eval(detail::vec_axpby(1.0, x, h, v));
      V d = detail::vec_axpby(1.0 / h, tp, -1.0 / h, tx);
      return detail::vec_sub(v, d);
    };
    const int kmax = cfg.krylov_dim;
    const double eta = std::min(0.1, std::sqrt(gn / first) * 0.1);
    std::vector<V> basis;
    basis.reserve(kmax + 1);
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(kmax + 1, kmax);
    const double beta = detail::vec_norm_raw(g);
    basis.push_back(detail::vec_axpby(-1.0 / beta, g, 0.0, g));
    Eigen::VectorXd y;
    int used = 0;
    for (int j = 0; j < kmax; ++j) {
      V w = jv(basis[j]);
      for (int i = 0; i <= j; ++i) {
        double dot = 0.0;
        const double* a = detail::vec_data(w);
        const double* b = detail::vec_data(basis[i]);
        for (std::size_t q = 0; q < n; ++q) dot += a[q] * b[q];
        H(i, j) = dot;
        w = detail::vec_axpby(1.0, w, -dot, basis[i]);
      }
      const double wn = detail::vec_norm_raw(w);
      H(j + 1, j) = wn;
      used = j + 1;
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(used + 1);
      rhs(0) = detail::vec_norm_raw(g);
      const Eigen::MatrixXd Hj = H.topLeftCorner(used + 1, used);
      y = Hj.colPivHouseholderQr().solve(rhs);
      const double lin_res = (rhs - Hj * y).norm() / rhs(0);
      if (lin_res <= eta || wn <= 1e-14 * rhs(0)) break;
      basis.push_back(detail::vec_axpby(1.0 / wn, w, 0.0, w));
    }
    V step = detail::vec_axpby(0.0, g, 0.0, g);
    for (int i = 0; i < used; ++i) step = detail::vec_axpby(1.0, step, y(i), basis[i]);

    double lambda = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 8 && evals < cfg.max_iter; ++ls) {
      V xt = detail::vec_axpby(1.0, x, lambda, step);
      V txt = T(xt);
      ++evals;
      if (detail::vec_finite(txt)) {
        V gt = detail::vec_sub(xt, txt);
        const double gtn = norm(gt);
        if (gtn < (1.0 - 1e-4 * lambda) * gn) {
          x = std::move(xt);
          tx = std::move(txt);
          g = std::move(gt);
          gn = gtn;
          accepted = true;
          break;
        }
      }
      lambda *= 0.5;
    }
    if (!accepted) {
      rep.iterations = evals;
      rep.contraction = contraction_estimate(rep.history);
      throw StepFailure("Newton line search failed", rep);
    }
  }
  rep.contraction = contraction_estimate(rep.history);
  throw StepFailure("Newton iteration did not converge within max_iter map evaluations", rep);
}

template <class V>
auto default_norm() {
  if constexpr (std::is_same_v<V, GridField>) {
    return [](const GridField& f) { return norm_h(f); };
  } else {
    return [](const V& v) { return detail::vec_norm(v); };
  }
}

/// Solves X = T(X) with the method selected in cfg.
template <class V, class Map>
std::pair<V, SolveReport> fixed_point_solve(Map&& T, V x, const FixedPointConfig& cfg) {
  switch (cfg.method) {
    case FixedPointMethod::anderson:
      return anderson_solve(std::forward<Map>(T), std::move(x), cfg, default_norm<V>());
    case FixedPointMethod::newton_krylov:
      return newton_krylov_solve(std::forward<Map>(T), std::move(x), cfg, default_norm<V>());
    case FixedPointMethod::mann:
      break;
  }
  return mann_solve(std::forward<Map>(T), std::move(x), cfg, default_norm<V>());
}

}  // namespace qce
