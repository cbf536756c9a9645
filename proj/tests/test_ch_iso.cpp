#include <catch_amalgamated.hpp>

#include <cmath>

#include "qce/ch_iso.hpp"
#include "support.hpp"

using namespace qce;

namespace {

FixedPointConfig tight() {
  FixedPointConfig fp;
  fp.fp_tol = 1e-13;
  fp.method = FixedPointMethod::anderson;
  fp.max_iter = 500;
  return fp;
}

}  // namespace

TEST_CASE("zero step gives the chemical potential residual", "[iso]") {
  const Grid g(32, 32);
  SpectralWorkspace ws(g);
  const ModelParams p{1.0, 0.2, 1e-3};
  const IsoState s = init_iso(test::smooth_random(g, 3));
  const GridField r = iso_residual(ws, s, s.U, 1e-3, p);
  const GridField expect = ws.laplacian(mu_iso(ws, s.U, s.Q, p)) * -1.0;
  CHECK(test::max_abs_diff(r, expect) <= 1e-9 * (1.0 + norm_inf(expect)));
}

TEST_CASE("lifted and primal energies agree on the manifold", "[iso]") {
  const Grid g(32, 32);
  SpectralWorkspace ws(g);
  const ModelParams p{1.0, 0.1, 6e-4};
  const IsoState s = init_iso(test::smooth_random(g, 8));
  CHECK(casimir_drift_iso(s) == 0.0);
  const double e = energy_iso(ws, s, p);
  CHECK(std::abs(e - energy_iso_primal(ws, s.U, p)) <= 1e-10 * std::abs(e));
}

TEST_CASE("one step satisfies the discrete energy identity", "[iso]") {
  const Grid g(64, 64);
  SpectralWorkspace ws(g);
  const ModelParams p{1.0, 0.1, 0.0};
  const IsoState s0 = init_iso(test::smooth_random(g, 21));
  const double dt = 1e-4;
  const IsoState s1 = iso_step(ws, s0, dt, p, tight());
  const GridField U_half = (s0.U + s1.U) * 0.5;
  const GridField mu = mu_iso(ws, U_half, q_half_iso(s0, U_half), p);
  const double lhs = energy_iso(ws, s1, p) - energy_iso(ws, s0, p);
  const double rhs = inner_h(mu, s1.U - s0.U);
  CHECK(std::abs(lhs - rhs) <= 1e-9 * (1.0 + std::abs(energy_iso(ws, s0, p))));
  // (mu, dt M Lap mu) = -dt M |grad mu|^2
  CHECK(lhs <= 0.0);
  CHECK(std::abs(lhs + dt * p.mobility * inner_h(ws.dx(mu), ws.dx(mu)) +
                 dt * p.mobility * inner_h(ws.dy(mu), ws.dy(mu))) <= 1e-8 * std::abs(lhs));
}

TEST_CASE("mass, Casimir and monotone energy over many steps", "[iso]") {
  const Grid g(64, 64);
  SpectralWorkspace ws(g);
  const ModelParams p{1.0, 0.15, 1e-4};
  IsoState s = init_iso(test::smooth_random(g, 31) * 0.8);
  IsoStepper stepper(ws, p);
  FixedPointConfig fp;
  fp.fp_tol = 1e-12;
  const double m0 = mean(s.U);
  double e = energy_iso(ws, s, p);
  for (int n = 0; n < 200; ++n) {
    s = stepper.step(s, 1e-4, fp);
    const double en = energy_iso(ws, s, p);
    REQUIRE(en - e <= 1e-10);
    e = en;
  }
  CHECK(std::abs(mean(s.U) - m0) <= 1e-12);
  CHECK(casimir_drift_iso(s) <= 1e-12);
}

TEST_CASE("constant states are steady", "[iso]") {
  const Grid g(16, 16);
  SpectralWorkspace ws(g);
  const IsoState s0 = init_iso(GridField(g, 0.4));
  const IsoState s1 = iso_step(ws, s0, 1e-2, {1.0, 0.1, 0.0}, {});
  CHECK(test::max_abs_diff(s1.U, s0.U) <= 1e-14);
}

TEST_CASE("iso stepping validates its inputs", "[iso]") {
  const Grid g(16, 16);
  SpectralWorkspace ws(g);
  const IsoState s = init_iso(GridField(g, 0.0));
  CHECK_THROWS_AS(iso_step(ws, s, 0.0, {1.0, 0.1, 0.0}, {}), InvalidArgument);
  CHECK_THROWS_AS(iso_step(ws, s, 1e-3, {1.0, -0.1, 0.0}, {}), InvalidArgument);
  std::vector<double> v(g.size(), 0.0);
  CHECK_THROWS_AS(init_iso(GridField(Grid(8, 8), std::vector<double>(64, NAN))), NonFinite);
}

TEST_CASE("an oversized step on a sharp field fails loudly", "[iso]") {
  const Grid g(64, 64);
  SpectralWorkspace ws(g);
  const IsoState s = init_iso(test::white_noise(g, 2));
  FixedPointConfig fp;
  fp.max_iter = 50;
  CHECK_THROWS_AS(iso_step(ws, s, 1.0, {1.0, 0.05, 0.0}, fp), StepFailure);
}
