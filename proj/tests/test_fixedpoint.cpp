#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "qce/ch_iso.hpp"
#include "qce/fixedpoint.hpp"
#include "support.hpp"

using namespace qce;

namespace {

// Scalar affine problem x = x_n + dt N((x + x_n)/2) with N(m) = L m and no
// linear symbol, so T has Lipschitz constant dt L / 2.
SolveReport scalar_solve(double dtL, double omega, std::vector<double>* x_out = nullptr) {
  const double dt = 0.1, L = dtL / dt;
  const std::vector<double> sym{0.0}, xn{1.0};
  auto T = [&](const std::vector<double>& x) {
    return apply_T(sym, [L](const std::vector<double>& m) { return std::vector<double>{L * m[0]}; }, xn, x, dt);
  };
  FixedPointConfig cfg;
  cfg.omega = omega;
  cfg.fp_tol = 1e-13;
  auto [x, rep] = mann_solve(T, xn, cfg, [](const std::vector<double>& v) { return std::abs(v[0]); });
  if (x_out) *x_out = x;
  return rep;
}

}  // namespace

TEST_CASE("Mann contraction matches the linear iteration factor", "[fixedpoint]") {
  for (double omega : {0.5, 0.7, 0.9, 1.0}) {
    std::vector<double> x;
    const SolveReport rep = scalar_solve(1.0, omega, &x);
    INFO("omega " << omega << " contraction " << rep.contraction);
    CHECK(rep.converged);
    CHECK(rep.contraction <= 1.0 - omega + omega * 0.5 + 0.05);
    // x = 1 + (x + 1)/2
    CHECK(std::abs(x[0] - 3.0) <= 1e-11);
  }
  const SolveReport plain = scalar_solve(1.0, 1.0);
  CHECK(std::abs(plain.contraction - 0.5) <= 0.05);
}

TEST_CASE("Mann flags divergence when dt L exceeds 2", "[fixedpoint]") {
  try {
    scalar_solve(2.5, 1.0);
    FAIL("expected divergence");
  } catch (const StepFailure& e) {
    CHECK(e.report().diverged);
    CHECK(e.report().contraction > 1.0);
  }
}

TEST_CASE("solver configuration is validated", "[fixedpoint]") {
  FixedPointConfig c;
  c.omega = 0.0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = {};
  c.fp_tol = -1.0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = {};
  c.max_iter = 0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
}

TEST_CASE("max_iter exhaustion is reported as non-convergence", "[fixedpoint]") {
  const std::vector<double> sym{0.0}, xn{1.0};
  auto T = [&](const std::vector<double>& x) {
    return apply_T(sym, [](const std::vector<double>& m) { return std::vector<double>{9.0 * m[0]}; }, xn, x, 0.1);
  };
  FixedPointConfig cfg;
  cfg.max_iter = 3;
  cfg.fp_tol = 1e-15;
  try {
    fixed_point_solve(T, xn, cfg);
    FAIL("expected failure");
  } catch (const StepFailure& e) {
    CHECK_FALSE(e.report().converged);
    CHECK(e.report().iterations == 3);
  }
}

TEST_CASE("Anderson and Newton-Krylov reach the Mann fixed point", "[fixedpoint]") {
  // Mildly nonlinear 3-vector problem with a stiff diagonal symbol.
  const std::vector<double> sym{-1.0, -50.0, -400.0}, xn{0.3, -0.2, 0.5};
  auto N = [](const std::vector<double>& m) {
    return std::vector<double>{-m[0] * m[0] * m[0] + m[1], std::sin(m[0]) - m[1] * m[2], m[0] * m[1]};
  };
  auto T = [&](const std::vector<double>& x) { return apply_T(sym, N, xn, x, 0.05); };
  FixedPointConfig cfg;
  cfg.fp_tol = 1e-14;
  const auto [xm, rm] = fixed_point_solve(T, xn, cfg);
  for (auto method : {FixedPointMethod::anderson, FixedPointMethod::newton_krylov}) {
    cfg.method = method;
    const auto [x, r] = fixed_point_solve(T, xn, cfg);
    CHECK(r.converged);
    for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(x[k] - xm[k]) <= 1e-12);
  }
}

TEST_CASE("spectral midpoint map has the scheme solution as its fixed point", "[fixedpoint]") {
  const Grid g(32, 32);
  SpectralWorkspace ws(g);
  const ModelParams p{1.0, 0.3, 0.0};
  const IsoState s0 = init_iso(test::smooth_random(g, 4) * 0.5);
  FixedPointConfig fp;
  fp.fp_tol = 1e-13;
  SolveReport rep;
  const IsoState s1 = iso_step(ws, s0, 1e-3, p, fp, &rep);
  CHECK(rep.converged);
  const GridField r = iso_residual(ws, s0, s1.U, 1e-3, p);
  CHECK(norm_inf(r) <= 1e-7 * norm_inf(ws.laplacian(s0.U)));
}
