#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "qce/analysis.hpp"

using namespace qce;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;
constexpr double pi = std::numbers::pi;

namespace {

DispersionSpec iso_spec(double u0, double eps = 0.1, double beta = 0.0) {
  DispersionSpec s;
  s.model = {1.0, eps, beta};
  s.u0 = u0;
  return s;
}

GridField level_set(const Grid& g, double p, double eps) {
  return GridField::from_function(g, [&](double x, double y) {
    const double r = std::pow(std::pow(std::abs(x - pi), p) + std::pow(std::abs(y - pi), p), 1.0 / p);
    return std::tanh((r - 0.4 * pi) / (1.2 * eps));
  });
}

}  // namespace

TEST_CASE("critical anisotropy strengths are exact", "[analysis]") {
  CHECK(critical_alpha({Fold::twofold, 0.0}) == 1.0 / 3.0);
  CHECK(critical_alpha({Fold::fourfold, 0.0}) == 1.0 / 15.0);
}

TEST_CASE("stiffness is non-negative exactly up to the critical value", "[analysis]") {
  for (Fold f : {Fold::twofold, Fold::fourfold}) {
    const double ac = critical_alpha({f, 0.0});
    auto min_stiffness = [&](double alpha) {
      double m = INFINITY;
      for (int k = 0; k < 10000; ++k) m = std::min(m, stiffness({f, alpha}, 2.0 * pi * k / 10000.0));
      return m;
    };
    CHECK(min_stiffness(ac) >= -1e-14);
    CHECK(min_stiffness(0.5 * ac) > 0.0);
    CHECK(min_stiffness(ac * 1.001) < 0.0);
  }
}

TEST_CASE("potential derivatives are consistent", "[analysis]") {
  const std::vector<PotentialSpec> ps{PotentialSpec::double_well(), PotentialSpec::flory_huggins(1.0, 2.0),
                                      PotentialSpec::sixth_order(1.0, -2.0, 0.5)};
  for (const auto& p : ps)
    for (double u : {-0.6, -0.1, 0.3, 0.8}) {
      const double h = 1e-5;
      CHECK_THAT(p.dF(u), WithinAbs((p.F(u + h) - p.F(u - h)) / (2 * h), 1e-8));
      CHECK_THAT(p.d2F(u), WithinAbs((p.dF(u + h) - p.dF(u - h)) / (2 * h), 1e-7));
    }
  CHECK_THROWS_AS(PotentialSpec::flory_huggins(1.0, 2.0).F(1.0), InvalidArgument);
}

TEST_CASE("spinodal classification follows the sign of F''", "[analysis]") {
  const auto dw = PotentialSpec::double_well();
  CHECK(spinodal_classify(dw, 0.0) == Stability::unstable);
  CHECK(spinodal_classify(dw, 0.5) == Stability::unstable);
  CHECK(spinodal_classify(dw, 0.70) == Stability::stable);
  CHECK(spinodal_classify(dw, 0.95) == Stability::stable);
  const auto fh = PotentialSpec::flory_huggins(1.0, 2.0);
  CHECK(spinodal_classify(fh, 0.0) == Stability::unstable);
  CHECK(spinodal_classify(fh, 0.9) == Stability::stable);
}

TEST_CASE("isotropic growth rate and unstable band", "[analysis]") {
  const auto s = iso_spec(0.0, 0.1, 1e-4);
  CHECK(lambda_iso(s, 0.0) == 0.0);
  const auto band = unstable_band(s);
  REQUIRE(band);
  CHECK(band->first == 0.0);
  const double kc = band->second;
  CHECK(std::abs(lambda_iso(s, kc)) <= 1e-9 * kc * kc * kc * kc);
  CHECK(lambda_iso(s, 0.5 * kc) > 0.0);
  CHECK(lambda_iso(s, 1.5 * kc) < 0.0);
  CHECK_THAT(unstable_band(iso_spec(0.0))->second, WithinRel(10.0, 1e-15));
  CHECK_FALSE(unstable_band(iso_spec(0.7)));
  CHECK_THROWS_AS(lambda_iso(s, -1.0), InvalidArgument);
}

TEST_CASE("anisotropic rate scales the isotropic one by Gamma", "[analysis]") {
  auto s = iso_spec(0.0);
  s.gamma = GammaSpec{Fold::fourfold, 0.1};
  for (double th : {0.0, 0.3, pi / 4, 1.2}) {
    const double kx = 3 * std::cos(th), ky = 3 * std::sin(th);
    CHECK_THAT(gamma_of_wavevector(*s.gamma, kx, ky), WithinAbs((*s.gamma)(th), 1e-14));
    CHECK_THAT(lambda_aniso(s, kx, ky), WithinRel(lambda_iso(s, 3.0) * (*s.gamma)(th), 1e-13));
  }
  CHECK(lambda_aniso(s, 0.0, 0.0) == 0.0);
  const GammaSpec two{Fold::twofold, 0.2};
  CHECK_THAT(gamma_of_wavevector(two, 1.0, 1.0), WithinAbs(two(pi / 4), 1e-15));
}

TEST_CASE("amplification factors of the three methods", "[analysis]") {
  const double dt = 1e-3;
  for (double lam : {5.0, -10.0, -1e5}) {
    const double z = dt * lam;
    CHECK(amplification_from_rate(Method::EE, lam, dt) == 1 + z);
    CHECK_THAT(amplification_from_rate(Method::IE, lam, dt), WithinRel(1 / (1 - z), 1e-15));
    CHECK_THAT(amplification_from_rate(Method::IM, lam, dt), WithinRel((1 + z / 2) / (1 - z / 2), 1e-15));
    CHECK_THAT(amplification_from_rate(Method::exact, lam, dt), WithinRel(std::exp(z), 1e-15));
  }
  // A-stability of the midpoint rule without L-stability.
  CHECK(std::abs(amplification_from_rate(Method::IM, -1e9, dt)) < 1.0);
  CHECK(amplification_from_rate(Method::IM, -1e9, dt) < -0.99);
  CHECK(std::abs(amplification_from_rate(Method::EE, -1e4, dt)) > 1.0);
  CHECK_THROWS_AS(amplification_from_rate(Method::IE, 1e3, dt), SingularConstraint);
  CHECK_THROWS_AS(amplification_from_rate(Method::IM, 2e3, dt), SingularConstraint);
  CHECK(parse_method("IM") == Method::IM);
  CHECK(to_string(Method::exact) == "exact");
  CHECK_THROWS_AS(parse_method("RK4"), InvalidArgument);
}

TEST_CASE("dispersion sweep covers a symmetric square grid", "[analysis]") {
  auto s = iso_spec(0.0);
  s.gamma = GammaSpec{Fold::fourfold, 0.1};
  const auto rows = dispersion_sweep(s, Method::IM, 1e-4, 20.0, 21);
  REQUIRE(rows.size() == 21u * 21u);
  CHECK(rows.front().kx == -20.0);
  CHECK(rows.back().ky == 20.0);
  for (std::size_t k = 0; k < rows.size(); ++k) CHECK(rows[k].value == rows[rows.size() - 1 - k].value);
  CHECK_THROWS_AS(dispersion_sweep(s, Method::IM, 1e-4, 20.0, 1), InvalidArgument);
}

TEST_CASE("coarsening slope recovers a power law", "[analysis]") {
  std::vector<double> t, e;
  for (int k = 1; k <= 400; ++k) {
    t.push_back(0.25 * k);
    e.push_back(3.0 * std::pow(0.25 * k, -1.0 / 3.0));
  }
  const LineFit f = coarsening_slope(t, e);
  CHECK_THAT(f.slope, WithinAbs(-1.0 / 3.0, 1e-12));
  CHECK_THAT(f.r2, WithinAbs(1.0, 1e-12));
  CHECK(f.t0 == 10.0);
  CHECK(f.t1 == 100.0);
  CHECK_THROWS_AS(coarsening_slope(t, e, 99.0, 100.0), InvalidArgument);
  e[300] = -1.0;
  CHECK_THROWS_AS(coarsening_slope(t, e), InvalidArgument);
}

TEST_CASE("temporal order of synthetic error sequences", "[analysis]") {
  CHECK_THAT(temporal_order({4e-4, 2e-4, 1e-4}, {16e-6, 4e-6, 1e-6}), WithinAbs(2.0, 1e-12));
  CHECK_THAT(temporal_order({1e-2, 1e-3}, {1e-2, 1e-3}), WithinAbs(1.0, 1e-12));
  CHECK_THROWS_AS(temporal_order({1e-4, 2e-4}, {1.0, 2.0}), InvalidArgument);
  CHECK_THROWS_AS(temporal_order({1e-4}, {1.0}), InvalidArgument);
}

TEST_CASE("gap detection handles wrap-around", "[analysis]") {
  const std::vector<double> d{0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.01};
  const auto g = find_gaps(d, 0.05);
  REQUIRE(g.size() == 2);
  CHECK(g[0] == std::make_pair<std::size_t, std::size_t>(3, 4));
  CHECK(g[1] == std::make_pair<std::size_t, std::size_t>(6, 0));
  CHECK(find_gaps({1.0, 1.0, 1.0}).empty());
}

TEST_CASE("orientation histogram: circle has no gaps, square has gaps", "[analysis]") {
  const Grid g(128, 128);
  SpectralWorkspace ws(g);
  const auto circle = orientation_histogram(ws, level_set(g, 2.0, 0.1));
  CHECK(circle.gaps.empty());
  CHECK(circle.bins() == 36);
  CHECK_THAT(circle.bin_angle(18), WithinAbs(0.0, 1e-15));
  const auto square = orientation_histogram(ws, level_set(g, 30.0, 0.1));
  CHECK_FALSE(square.gaps.empty());
  CHECK_THROWS_AS(orientation_histogram(ws, GridField(g, 1.0)), InvalidArgument);
}
