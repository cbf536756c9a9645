// Acceptance driver: one PASS/FAIL line per criterion.
//
//   acceptance [--only 1,5,9] [--out DIR]
//
// Preset runs land in DIR/<preset> (default "acceptance") and are shared
// between criteria. The report is also written to DIR/report.txt.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "qce/analysis.hpp"
#include "qce/config.hpp"
#include "qce/fixedpoint.hpp"
#include "qce/quadratize.hpp"
#include "qce/rng.hpp"
#include "qce/runner.hpp"

using namespace qce;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  int id = 0;
  bool pass = false;
  std::string detail;
};

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

class Harness {
 public:
  explicit Harness(fs::path out) : out_(std::move(out)) {}

  const RunArtifacts& preset_run(const std::string& name) {
    if (auto it = runs_.find(name); it != runs_.end()) return it->second;
    ExperimentConfig cfg = preset(name);
    cfg.out_dir = (out_ / name).string();
    RunOptions opt;
    opt.progress = &std::cerr;
    const auto t0 = std::chrono::steady_clock::now();
    std::cerr << "running preset " << name << std::endl;
    RunArtifacts art;
    try {
      art = run_experiment(cfg, opt);
    } catch (const Error& e) {
      art.failed = true;
      art.failure = e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cerr << "preset " << name << " finished in " << sci(secs) << " s" << std::endl;
    return runs_.emplace(name, std::move(art)).first->second;
  }

  const std::map<std::string, RunArtifacts>& runs() const { return runs_; }

 private:
  fs::path out_;
  std::map<std::string, RunArtifacts> runs_;
};

const Monitor* find(const RunArtifacts& a, const std::string& name) {
  for (const auto& m : a.monitors)
    if (m.name == name) return &m;
  return nullptr;
}

// Requires every named monitor to exist and pass; appends "name=value".
bool require(const RunArtifacts& a, const std::vector<std::string>& names, std::string& detail) {
  bool ok = true;
  for (const auto& n : names) {
    const Monitor* m = find(a, n);
    if (!m) {
      detail += " " + n + "=missing";
      ok = false;
      continue;
    }
    detail += " " + n + "=" + sci(m->value);
    ok = ok && m->pass;
  }
  return ok;
}

bool completed(const RunArtifacts& a, const std::string& name, std::string& detail) {
  if (!a.failed) return true;
  std::string first = a.failure.substr(0, a.failure.find('\n'));
  detail += " [" + name + " stopped: " + first + "]";
  return false;
}

Verdict energy_iso(Harness& h) {
  Verdict v{1, false, {}};
  const auto& a = h.preset_run("iso_two_droplet");
  v.pass = require(a, {"energy_increase"}, v.detail);
  v.pass = completed(a, "iso_two_droplet", v.detail) && v.pass;
  v.detail += " steps=" + std::to_string(a.log.empty() ? 0 : std::lround(a.log.back().t / 1e-4));
  return v;
}

Verdict energy_aniso(Harness& h) {
  Verdict v{2, false, {}};
  const auto& a = h.preset_run("aniso_single");
  v.pass = require(a, {"energy_increase"}, v.detail);
  v.pass = completed(a, "aniso_single", v.detail) && v.pass;
  return v;
}

Verdict casimirs(Harness& h) {
  Verdict v{3, false, {}};
  const auto& iso = h.preset_run("iso_two_droplet");
  v.detail += " iso:";
  bool ok = require(iso, {"casimir_q"}, v.detail) && completed(iso, "iso_two_droplet", v.detail);
  const auto& an = h.preset_run("aniso_casimir");
  v.detail += " aniso:";
  ok = require(an, {"casimir_reciprocal", "casimir_square_type", "casimir_y6_product"}, v.detail) && ok;
  ok = completed(an, "aniso_casimir", v.detail) && ok;
  v.pass = ok;
  return v;
}

Verdict mass_all(Harness& h) {
  Verdict v{4, false, {}};
  bool ok = true;
  double worst = 0.0;
  std::string worst_name;
  int count = 0;
  for (const auto& name : preset_names()) {
    const auto& a = h.preset_run(name);
    ok = completed(a, name, v.detail) && ok;
    bool any = false;
    for (const auto& m : a.monitors) {
      if (m.name.size() < 10 || m.name.compare(m.name.size() - 10, 10, "mass_drift") != 0) continue;
      any = true;
      ++count;
      ok = ok && m.pass;
      if (m.value >= worst) {
        worst = m.value;
        worst_name = name + ":" + m.name;
      }
    }
    if (!any) {
      ok = false;
      v.detail += " [" + name + " reported no mass monitor]";
    }
  }
  v.pass = ok;
  v.detail = " runs=" + std::to_string(count) + " worst=" + sci(worst) + " (" + worst_name + ")" + v.detail;
  return v;
}

Verdict order(Harness& h) {
  Verdict v{5, false, {}};
  const auto& a = h.preset_run("time_order");
  v.pass = require(a, {"error_ratio_1", "error_ratio_2", "temporal_order"}, v.detail);
  v.pass = completed(a, "time_order", v.detail) && v.pass;
  return v;
}

Verdict dispersion_link(Harness& h) {
  Verdict v{6, false, {}};
  const auto& a = h.preset_run("dispersion_map");
  v.pass = require(a, {"link_rel_error_k1", "link_rel_error_k2", "link_rel_error_k3"}, v.detail);
  v.pass = completed(a, "dispersion_map", v.detail) && v.pass;
  return v;
}

Verdict spinodal(Harness& h) {
  Verdict v{7, false, {}};
  const auto& a = h.preset_run("spinodal");
  v.pass = require(a, {"u0_0.00.perturbation_growth", "u0_0.70.perturbation_decay", "u0_0.95.perturbation_decay"},
                   v.detail);
  v.pass = completed(a, "spinodal", v.detail) && v.pass;
  return v;
}

Verdict coarsening(Harness& h) {
  Verdict v{8, false, {}};
  const auto& a = h.preset_run("coarsening");
  v.pass = require(a, {"coarsening_slope_deviation"}, v.detail);
  for (const auto& [k, val] : a.results)
    if (k.rfind("coarsening", 0) == 0) v.detail += " " + k + "=" + sci(val);
  v.pass = completed(a, "coarsening", v.detail) && v.pass;
  return v;
}

Verdict stiffness_values() {
  Verdict v{9, false, {}};
  constexpr int kTheta = 10000;
  bool ok = critical_alpha({Fold::twofold, 0.0}) == 1.0 / 3.0 && critical_alpha({Fold::fourfold, 0.0}) == 1.0 / 15.0;
  v.detail += ok ? " critical values exact" : " critical values wrong";
  int mismatches = 0, probes = 0;
  for (Fold f : {Fold::twofold, Fold::fourfold}) {
    const double ac = critical_alpha({f, 0.0});
    for (int k = 0; k <= 200; ++k) {
      const double alpha = ac * k / 100.0;
      double m = INFINITY;
      for (int j = 0; j < kTheta; ++j)
        m = std::min(m, stiffness({f, alpha}, 2.0 * std::numbers::pi * j / kTheta));
      const bool nonneg = m >= -1e-12;
      ++probes;
      if (nonneg != (k <= 100)) ++mismatches;
    }
  }
  v.detail += " iff-mismatches=" + std::to_string(mismatches) + "/" + std::to_string(probes);
  v.pass = ok && mismatches == 0;
  return v;
}

RationalExpr random_expr(SplitMix64& rng, std::size_t n, int depth) {
  using E = RationalExpr;
  auto pick = [&](int m) { return static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(m)); };
  if (depth == 0 || pick(4) == 0) {
    if (pick(3) == 0) return E::constant(rng.uniform(-2.0, 2.0));
    return E::variable(static_cast<std::size_t>(pick(static_cast<int>(n))));
  }
  auto positive = [&](E e) { return E::sum({E::constant(rng.uniform(0.5, 1.5)), E::power(std::move(e), 2)}); };
  switch (pick(5)) {
    case 0: return E::sum({random_expr(rng, n, depth - 1), random_expr(rng, n, depth - 1)});
    case 1: return E::product({random_expr(rng, n, depth - 1), random_expr(rng, n, depth - 1)});
    case 2: return E::power(random_expr(rng, n, depth - 1), 1 + pick(4));
    case 3: return E::reciprocal(positive(random_expr(rng, n, depth - 1)));
    default: return E::root(positive(random_expr(rng, n, depth - 1)), 2 + pick(4));
  }
}

Verdict quadratization() {
  Verdict v{11, false, {}};
  SplitMix64 rng(11);
  const std::size_t n = 3;
  double worst = 0.0;
  bool degrees = true;
  for (int e = 0; e < 100; ++e) {
    const RationalExpr h = random_expr(rng, n, 3);
    const auto s = quadratize(h, n);
    degrees = degrees && s.energy.degree() <= 2;
    for (const auto& a : s.aux) degrees = degrees && a.constraint.degree() <= 2;
    for (int k = 0; k < 100; ++k) {
      std::vector<double> x(n);
      for (auto& c : x) c = rng.uniform(-2.0, 2.0);
      const double hx = h(x);
      worst = std::max(worst, std::abs(s.lifted_energy(s.embed(x)) - hx) / (1.0 + std::abs(hx)));
    }
  }
  double terminal = 0.0;
  for (int q = 2; q <= 9; ++q) {
    const auto s = quadratize_root(q);
    for (const auto& a : s.aux) degrees = degrees && a.constraint.degree() <= 2;
    for (int k = 0; k < 20; ++k) {
      const double x = rng.uniform(0.01, 10.0);
      terminal = std::max(terminal, std::abs(s.aux.front().constraint(s.embed({x}))) / (1.0 + x));
    }
  }
  v.detail = " manifold=" + sci(worst) + " terminal=" + sci(terminal) + (degrees ? " degrees<=2" : " degree>2 found");
  v.pass = degrees && worst <= 1e-10 && terminal <= 1e-10;
  return v;
}

Verdict lifted_ode() {
  Verdict v{12, false, {}};
  using E = RationalExpr;
  // Quartic oscillator H = p^2/2 + x^4/4, x' = p, p' = -x^3.
  const E H = E::product({E::constant(0.5), E::power(E::variable(1), 2)}) +
              E::product({E::constant(0.25), E::power(E::variable(0), 4)});
  const auto sys = quadratize(H, 2);
  Eigen::MatrixXd S(2, 2);
  S << 0, 1, -1, 0;
  const auto ode = lift_structured(sys, S);
  FixedPointConfig fp;
  fp.fp_tol = 1e-14;
  const double dt = 0.1, h0 = H({1.0, 0.0});
  constexpr int kSteps = 10000;

  auto z = sys.embed({1.0, 0.0});
  double mid = 0.0;
  for (int k = 0; k < kSteps; ++k) {
    z = midpoint_step(ode, z, dt, fp);
    mid = std::max(mid, std::abs(H({z[0], z[1]}) - h0));
  }

  auto f = [](const std::array<double, 2>& u) { return std::array<double, 2>{u[1], -u[0] * u[0] * u[0]}; };
  std::array<double, 2> u{1.0, 0.0};
  double rk = 0.0;
  for (int k = 0; k < kSteps; ++k) {
    const auto k1 = f(u);
    const auto k2 = f({u[0] + 0.5 * dt * k1[0], u[1] + 0.5 * dt * k1[1]});
    const auto k3 = f({u[0] + 0.5 * dt * k2[0], u[1] + 0.5 * dt * k2[1]});
    const auto k4 = f({u[0] + dt * k3[0], u[1] + dt * k3[1]});
    for (int i = 0; i < 2; ++i) u[i] += dt / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
  }
  rk = std::abs(H({u[0], u[1]}) - h0);
  v.detail = " midpoint=" + sci(mid) + " rk4=" + sci(rk) + " ratio=" + sci(rk / std::max(mid, 1e-300));
  v.pass = mid <= 1e-9 && rk >= 10.0 * mid;
  return v;
}

Verdict mann_contract() {
  Verdict v{13, false, {}};
  auto solve = [](double dtL, double omega) {
    const double dt = 0.1, L = dtL / dt;
    const std::vector<double> sym{0.0}, xn{1.0};
    auto T = [&](const std::vector<double>& x) {
      return apply_T(sym, [L](const std::vector<double>& m) { return std::vector<double>{L * m[0]}; }, xn, x, dt);
    };
    FixedPointConfig cfg;
    cfg.omega = omega;
    cfg.fp_tol = 1e-13;
    return mann_solve(T, xn, cfg, [](const std::vector<double>& x) { return std::abs(x[0]); }).second;
  };
  bool ok = true;
  for (double omega : {0.5, 0.7, 0.9, 1.0}) {
    const SolveReport r = solve(1.0, omega);
    const double bound = 1.0 - omega + omega / 2.0 + 0.05;
    ok = ok && r.converged && r.contraction <= bound;
    v.detail += " w" + sci(omega) + ":q=" + sci(r.contraction);
  }
  bool flagged = false;
  try {
    solve(2.5, 1.0);
  } catch (const StepFailure& e) {
    flagged = e.report().diverged;
    v.detail += " dtL=2.5:q=" + sci(e.report().contraction);
  }
  v.detail += flagged ? " divergent-flagged" : " divergence-not-flagged";
  v.pass = ok && flagged;
  return v;
}

Verdict orientations(Harness& h) {
  Verdict v{10, false, {}};
  const auto& facet = h.preset_run("aniso_facet");
  v.detail += " a=0.1:";
  bool ok = require(facet, {"orientation_gaps"}, v.detail) && completed(facet, "aniso_facet", v.detail);
  const auto& smooth = h.preset_run("aniso_smooth");
  v.detail += " a=0.06:";
  ok = require(smooth, {"orientation_gaps"}, v.detail) && completed(smooth, "aniso_smooth", v.detail) && ok;
  v.pass = ok;
  return v;
}

std::set<int> parse_only(const std::string& s) {
  std::set<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.insert(std::stoi(tok));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  fs::path out = "acceptance";
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) only = parse_only(argv[++i]);
    else if (a == "--out" && i + 1 < argc) out = argv[++i];
    else {
      std::cerr << "usage: acceptance [--only 1,2,...] [--out DIR]\n";
      return 2;
    }
  }
  fs::create_directories(out);
  Harness h(out);
  const std::vector<std::pair<int, std::function<Verdict()>>> plan{
      {9, [] { return stiffness_values(); }},
      {11, [] { return quadratization(); }},
      {12, [] { return lifted_ode(); }},
      {13, [] { return mann_contract(); }},
      {6, [&] { return dispersion_link(h); }},
      {2, [&] { return energy_aniso(h); }},
      {7, [&] { return spinodal(h); }},
      {5, [&] { return order(h); }},
      {1, [&] { return energy_iso(h); }},
      {3, [&] { return casimirs(h); }},
      {10, [&] { return orientations(h); }},
      {8, [&] { return coarsening(h); }},
      {4, [&] { return mass_all(h); }},
  };

  std::vector<Verdict> verdicts;
  for (const auto& [id, fn] : plan) {
    if (!only.empty() && !only.count(id)) continue;
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {id, false, std::string(" exception: ") + e.what()};
    }
    v.id = id;
    std::cout << "criterion " << v.id << ": " << (v.pass ? "PASS" : "FAIL") << v.detail << std::endl;
    verdicts.push_back(v);
  }

  std::sort(verdicts.begin(), verdicts.end(), [](const Verdict& a, const Verdict& b) { return a.id < b.id; });
  std::ostringstream report;
  int failed = 0;
  for (const auto& v : verdicts) {
    report << "criterion " << v.id << ": " << (v.pass ? "PASS" : "FAIL") << v.detail << "\n";
    failed += v.pass ? 0 : 1;
  }
  report << (failed ? std::to_string(failed) + " of " + std::to_string(verdicts.size()) + " criteria failed"
                    : "all " + std::to_string(verdicts.size()) + " criteria passed")
         << "\n";
  std::cout << "\nsummary\n" << report.str();
  std::ofstream(out / "report.txt") << report.str();
  return failed ? 1 : 0;
}
