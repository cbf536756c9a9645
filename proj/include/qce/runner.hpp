#pragma once

// Experiment driver: initial conditions, stepping loops, invariant monitors
// and artifact output.
//
// Artifact directory layout:
//   config.ini        full configuration echo (re-runnable with `run`)
//   provenance.txt    code version, RNG name, start of config
//   energy.csv        t,energy,mass,fp_iters,fp_residual
//   snapshots/        U_<step>.bin field snapshots, index.csv
//   monitors.csv      name,value,threshold,pass
//   failure.txt       only when a step failed
// plus task-specific CSVs (spinodal.csv, order.csv, link.csv, ...).

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <memory>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "qce/analysis.hpp"
#include "qce/ch_aniso.hpp"
#include "qce/ch_iso.hpp"
#include "qce/config.hpp"
#include "qce/field_io.hpp"
#include "qce/fixedpoint.hpp"
#include "qce/rng.hpp"
#include "qce/spectral_grid.hpp"

#ifndef QCE_VERSION
#define QCE_VERSION "unknown"
#endif

namespace qce {

/// Initial field of the given kind; eps sets the tanh profile width.
inline GridField make_initial(const InitSpec& s, const Grid& g, double eps) {
  g.validate();
  if (!(eps > 0.0)) throw InvalidArgument("eps must be positive");
  const double pi = std::numbers::pi;
  auto droplet = [eps](double x, double y, double cx, double cy, double r) {
    return std::tanh((std::hypot(x - cx, y - cy) - r) / (1.2 * eps));
  };
  if (s.kind == "two_droplet") {
    // Union of the droplets: each profile is -1 inside, so take the minimum.
    return GridField::from_function(g, [&](double x, double y) {
      return std::min(droplet(x, y, 0.8 * pi, 1.02 * pi, 0.5 * pi),
                      droplet(x, y, 1.57 * pi, 0.98 * pi, 0.2 * pi));
    });
  }
  if (s.kind == "single_droplet") {
    if (!(s.radius > 0.0)) throw InvalidArgument("droplet radius must be positive");
    const double cx = 0.5 * (g.ax + g.bx), cy = 0.5 * (g.ay + g.by);
    return GridField::from_function(
        g, [&](double x, double y) { return droplet(x, y, cx, cy, s.radius * pi); });
  }
  if (s.kind == "uniform_random" || s.kind == "gaussian_perturbed") {
    SplitMix64 rng(s.seed);
    GridField f(g);
    const bool uniform = s.kind == "uniform_random";
    for (std::size_t k = 0; k < f.size(); ++k)
      f[k] = s.u0 + s.amplitude * (uniform ? rng.uniform(-1.0, 1.0) : rng.normal());
    return f;
  }
  if (s.kind == "single_mode") {
    const double sx = 2.0 * pi / g.lx(), sy = 2.0 * pi / g.ly();
    return GridField::from_function(g, [&](double x, double y) {
      return s.u0 + s.amplitude * std::cos(s.mode_kx * sx * (x - g.ax) + s.mode_ky * sy * (y - g.ay));
    });
  }
  throw InvalidArgument("unknown initial condition kind '" + s.kind + "'");
}

struct LogRow {
  double t = 0.0;
  double energy = 0.0;
  double mass = 0.0;  // spatial mean of U
  int fp_iters = 0;
  double fp_residual = 0.0;
};

struct Monitor {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  bool pass = true;
};

struct RunArtifacts {
  std::string dir;
  std::vector<LogRow> log;
  std::vector<std::pair<double, std::string>> snapshots;
  std::vector<Monitor> monitors;
  bool failed = false;
  std::string failure;
  std::optional<GridField> final_field;
  std::vector<std::pair<std::string, double>> results;  // task outputs (slopes, orders, ...)

  bool all_passed() const {
    return !failed && std::all_of(monitors.begin(), monitors.end(), [](const Monitor& m) { return m.pass; });
  }
  const Monitor* monitor(const std::string& name) const {
    for (const auto& m : monitors)
      if (m.name == name) return &m;
    return nullptr;
  }
  double result(const std::string& name) const {
    for (const auto& [k, v] : results)
      if (k == name) return v;
    throw InvalidArgument("no result named '" + name + "'");
  }
};

struct RunOptions {
  bool write = true;            // false: keep everything in memory
  std::ostream* progress = nullptr;
  std::optional<GridField> initial;  // overrides the configured initial condition
  std::function<void(long step, double t, const GridField& U)> observer;  // after every step
};

namespace detail {

inline std::string num(double v) { return fmt(v); }

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream os(p);
  if (!os) throw FormatError("cannot write '" + p.string() + "'");
  os << text;
}

inline void write_monitors(const std::filesystem::path& dir, const std::vector<Monitor>& ms) {
  std::ostringstream os;
  os << "name,value,threshold,pass\n";
  for (const auto& m : ms) os << m.name << "," << num(m.value) << "," << num(m.threshold) << "," << (m.pass ? 1 : 0) << "\n";
  write_text(dir / "monitors.csv", os.str());
}

inline void write_provenance(const std::filesystem::path& dir, const ExperimentConfig& cfg) {
  write_text(dir / "config.ini", cfg.to_ini().text());
  std::ostringstream os;
  os << "code_version = " << QCE_VERSION << "\n"
     << "rng = " << kRngName << "\n"
     << "field_format = QCEFIELD v" << int(kFieldVersion) << "\n"
     << "experiment = " << cfg.name << "\n"
     << "config = config.ini\n";
  write_text(dir / "provenance.txt", os.str());
}

/// Model-independent view of one stepping state.
class Simulation {
 public:
  virtual ~Simulation() = default;
  virtual void step(double dt, const FixedPointConfig& fp, SolveReport& rep) = 0;
  virtual double energy() = 0;
  virtual const GridField& U() const = 0;
  /// (name, value, threshold) triples checked at log points.
  virtual std::vector<Monitor> invariants() = 0;
};

class IsoSimulation final : public Simulation {
 public:
  IsoSimulation(const ExperimentConfig& c, const GridField& U0)
      : cfg_(c), ws_(c.grid), stepper_(ws_, c.params.model), s_(init_iso(U0)) {}
  void step(double dt, const FixedPointConfig& fp, SolveReport& rep) override {
    s_ = stepper_.step(s_, dt, fp, &rep);
  }
  double energy() override { return energy_iso(ws_, s_, cfg_.params.model); }
  const GridField& U() const override { return s_.U; }
  std::vector<Monitor> invariants() override {
    const double d = casimir_drift_iso(s_);
    return {{"casimir_q", d, cfg_.casimir_tol, d <= cfg_.casimir_tol}};
  }

 private:
  const ExperimentConfig& cfg_;
  SpectralWorkspace ws_;
  IsoStepper stepper_;
  IsoState s_;
};

class AnisoSimulation final : public Simulation {
 public:
  AnisoSimulation(const ExperimentConfig& c, const GridField& U0)
      : cfg_(c), ws_(c.grid), stepper_(ws_, c.params, c.psi), s_(init_aniso(ws_, U0, c.params, c.delta_reg)) {}
  void step(double dt, const FixedPointConfig& fp, SolveReport& rep) override {
    s_ = stepper_.step(s_, dt, fp, &rep);
  }
  double energy() override { return energy_aniso(ws_, s_, cfg_.params); }
  const GridField& U() const override { return s_.U; }
  std::vector<Monitor> invariants() override {
    const AnisoDrift d = aniso_drift(ws_, s_);
    std::vector<Monitor> m{
        {"casimir_square_type", d.max_square_type(), cfg_.square_tol, d.max_square_type() <= cfg_.square_tol},
        {"casimir_y6_product", d.y6, cfg_.square_tol, d.y6 <= cfg_.square_tol},
        {"casimir_reciprocal_regularized", d.reciprocal_regularized, cfg_.casimir_tol,
         d.reciprocal_regularized <= cfg_.casimir_tol}};
    if (cfg_.check_reciprocal)
      m.push_back({"casimir_reciprocal", d.reciprocal, cfg_.casimir_tol, d.reciprocal <= cfg_.casimir_tol});
    return m;
  }

 private:
  const ExperimentConfig& cfg_;
  SpectralWorkspace ws_;
  AnisoStepper stepper_;
  AnisoState s_;
};

inline void merge_max(std::vector<Monitor>& acc, const std::vector<Monitor>& now) {
  for (const auto& m : now) {
    auto it = std::find_if(acc.begin(), acc.end(), [&](const Monitor& a) { return a.name == m.name; });
    if (it == acc.end()) {
      acc.push_back(m);
    } else if (m.value > it->value || std::isnan(m.value)) {
      it->value = m.value;
      it->pass = it->pass && m.pass;
    } else {
      it->pass = it->pass && m.pass;
    }
  }
}

inline std::string snapshot_name(long step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "U_%08ld.bin", step);
  return buf;
}

inline void add_orientation_analysis(const ExperimentConfig& cfg, RunArtifacts& art,
                                     const std::filesystem::path& dir, bool write) {
  SpectralWorkspace ws(cfg.grid);
  const auto h = orientation_histogram(ws, *art.final_field);
  art.results.emplace_back("orientation_gaps", static_cast<double>(h.gaps.size()));
  const double mx = *std::max_element(h.density.begin(), h.density.end());
  const double mn = *std::min_element(h.density.begin(), h.density.end());
  art.results.emplace_back("orientation_min_over_max", mn / mx);
  if (write) {
    std::ostringstream os;
    os << "theta,density\n";
    for (std::size_t b = 0; b < h.bins(); ++b) os << num(h.bin_angle(b)) << "," << num(h.density[b]) << "\n";
    write_text(dir / "orientations.csv", os.str());
    std::ostringstream gs;
    gs << "theta_start,theta_end,bins\n";
    for (const auto& [a, b] : h.gaps) {
      const std::size_t len = (b + h.bins() - a) % h.bins() + 1;
      gs << num(h.bin_angle(a)) << "," << num(h.bin_angle(b)) << "," << len << "\n";
    }
    write_text(dir / "gaps.csv", gs.str());
  }
  const auto n = static_cast<double>(h.gaps.size());
  if (cfg.expect_gaps == "none") art.monitors.push_back({"orientation_gaps", n, 0.0, h.gaps.empty()});
  if (cfg.expect_gaps == "some") art.monitors.push_back({"orientation_gaps", n, 1.0, !h.gaps.empty()});
}

inline void add_coarsening_analysis(const ExperimentConfig& cfg, RunArtifacts& art,
                                    const std::filesystem::path& dir, bool write) {
  std::vector<double> t, e;
  for (const auto& r : art.log) {
    if (r.t <= 0.0) continue;
    t.push_back(r.t);
    e.push_back(r.energy / cfg.grid.area());
  }
  const LineFit f = coarsening_slope(t, e);
  art.results.emplace_back("coarsening_slope", f.slope);
  if (write) {
    std::ostringstream os;
    os << "slope,intercept,r2,samples,t0,t1\n"
       << num(f.slope) << "," << num(f.intercept) << "," << num(f.r2) << "," << f.samples << ","
       << num(f.t0) << "," << num(f.t1) << "\n";
    write_text(dir / "coarsening.csv", os.str());
  }
  const double dev = std::abs(f.slope - cfg.coarsening_target);
  art.monitors.push_back({"coarsening_slope_deviation", dev, cfg.coarsening_tol, dev <= cfg.coarsening_tol});
}

}  // namespace detail

/// Runs one time-stepping experiment (task = simulate).
inline RunArtifacts run_simulation(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
  namespace fs = std::filesystem;
  cfg.validate();
  RunArtifacts art;
  art.dir = cfg.out_dir;
  const fs::path dir(cfg.out_dir);
  std::ofstream elog;
  if (opt.write) {
    fs::create_directories(dir / "snapshots");
    detail::write_provenance(dir, cfg);
    fs::remove(dir / "failure.txt");
    elog.open(dir / "energy.csv");
    if (!elog) throw FormatError("cannot write energy log in '" + cfg.out_dir + "'");
    elog << "t,energy,mass,fp_iters,fp_residual\n" << std::setprecision(17);
  }

  const GridField U0 = opt.initial ? *opt.initial : make_initial(cfg.init, cfg.grid, cfg.params.model.eps);
  std::unique_ptr<detail::Simulation> sim;
  if (cfg.model == ModelKind::iso) sim = std::make_unique<detail::IsoSimulation>(cfg, U0);
  else sim = std::make_unique<detail::AnisoSimulation>(cfg, U0);

  const double mass0 = mean(sim->U());
  double E = sim->energy();
  double max_dE = -INFINITY, max_dmass = 0.0;
  std::vector<Monitor> inv;
  std::ofstream sindex;
  if (opt.write) {
    sindex.open(dir / "snapshots" / "index.csv");
    sindex << "step,t,file\n" << std::setprecision(17);
  }

  auto record = [&](long step, double t, const SolveReport& rep, bool snap) {
    LogRow r{t, E, mean(sim->U()), rep.iterations, rep.residual};
    art.log.push_back(r);
    if (opt.write) {
      elog << r.t << "," << r.energy << "," << r.mass << "," << r.fp_iters << "," << r.fp_residual << "\n";
      if (snap) {
        const std::string name = detail::snapshot_name(step);
        save_field((dir / "snapshots" / name).string(), sim->U());
        sindex << step << "," << t << "," << name << "\n";
        art.snapshots.emplace_back(t, name);
      }
    }
    detail::merge_max(inv, sim->invariants());
  };

  record(0, 0.0, SolveReport{}, true);
  if (opt.observer) opt.observer(0, 0.0, sim->U());

  const bool ramp = cfg.dt_start > 0.0 && cfg.dt_start < cfg.dt;
  long nsteps_const = 0;
  if (!ramp) {
    nsteps_const = std::lround(cfg.t_end / cfg.dt);
    if (std::abs(static_cast<double>(nsteps_const) * cfg.dt - cfg.t_end) > 1e-9 * cfg.t_end)
      throw InvalidArgument("t_end must be an integer multiple of dt");
  }
  double t = 0.0, h = ramp ? cfg.dt_start : cfg.dt;
  long step = 0;
  while (ramp ? t < cfg.t_end * (1.0 - 1e-12) : step < nsteps_const) {
    const double hs = ramp ? std::min(h, cfg.t_end - t) : cfg.dt;
    SolveReport rep;
    try {
      sim->step(hs, cfg.fp, rep);
    } catch (const Error& e) {
      art.failed = true;
      std::ostringstream os;
      os << "step " << step + 1 << " at t=" << detail::num(t) << " dt=" << detail::num(hs) << ": " << e.what() << "\n";
      if (const auto* sf = dynamic_cast<const StepFailure*>(&e)) os << sf->report().summary() << "\n";
      art.failure = os.str();
      break;
    }
    ++step;
    t = ramp ? t + hs : static_cast<double>(step) * cfg.dt;
    if (ramp) h = std::min(cfg.dt, h * cfg.dt_growth);
    const double E1 = sim->energy();
    max_dE = std::max(max_dE, E1 - E);
    E = E1;
    max_dmass = std::max(max_dmass, std::abs(mean(sim->U()) - mass0));
    if (!sim->U().all_finite()) {
      art.failed = true;
      art.failure = "non-finite field at step " + std::to_string(step) + "\n";
      break;
    }
    if (opt.observer) opt.observer(step, t, sim->U());
    const bool last = ramp ? t >= cfg.t_end * (1.0 - 1e-12) : step == nsteps_const;
    const bool snap = last || (cfg.snapshot_every > 0 && step % cfg.snapshot_every == 0);
    if (last || snap || step % cfg.log_every == 0) record(step, t, rep, snap);
    if (opt.progress && (step % 500 == 0 || last))
      *opt.progress << cfg.name << ": step " << step << " t=" << t << " E=" << E << " iters=" << rep.iterations << std::endl;
  }
  art.final_field = sim->U();

  const double etol = cfg.effective_energy_tol();
  art.monitors.push_back({"energy_increase", std::isfinite(max_dE) ? max_dE : 0.0, etol, !(max_dE > etol)});
  art.monitors.push_back({"mass_drift", max_dmass, cfg.mass_tol, max_dmass <= cfg.mass_tol});
  for (const auto& m : inv) art.monitors.push_back(m);
  if (art.failed) art.monitors.push_back({"step_failure", 1.0, 0.0, false});

  if (!art.failed) {
    try {
      if (cfg.orientations) detail::add_orientation_analysis(cfg, art, dir, opt.write);
      if (cfg.coarsening) detail::add_coarsening_analysis(cfg, art, dir, opt.write);
    } catch (const Error& e) {
      art.monitors.push_back({"analysis_error", 1.0, 0.0, false});
      art.failure += std::string("analysis: ") + e.what() + "\n";
    }
  }
  if (opt.write) {
    elog.flush();
    detail::write_monitors(dir, art.monitors);
    if (art.failed || !art.failure.empty()) detail::write_text(dir / "failure.txt", art.failure);
  }
  return art;
}

namespace detail {

inline void finish_task(const ExperimentConfig& cfg, RunArtifacts& art, const RunOptions& opt) {
  if (!opt.write) return;
  std::filesystem::create_directories(cfg.out_dir);
  write_provenance(cfg.out_dir, cfg);
  write_monitors(cfg.out_dir, art.monitors);
  if (!art.failure.empty()) write_text(std::filesystem::path(cfg.out_dir) / "failure.txt", art.failure);
}

inline void absorb(RunArtifacts& art, const RunArtifacts& r, const std::string& prefix) {
  for (auto m : r.monitors) {
    m.name = prefix + m.name;
    art.monitors.push_back(m);
  }
  if (r.failed) {
    art.failed = true;
    art.failure += prefix + r.failure;
  }
}

}  // namespace detail

/// Spinodal sweep over init.u0_list; each background state runs in
/// <out_dir>/u0_<value>. Unstable states must grow their perturbation energy
/// at least tenfold; stable ones must shrink the perturbation max-norm to
/// at most a tenth.
inline RunArtifacts run_spinodal(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
  namespace fs = std::filesystem;
  cfg.validate();
  RunArtifacts art;
  art.dir = cfg.out_dir;
  std::ostringstream csv;
  csv << std::setprecision(17)
      << "u0,fpp,class,initial_energy,max_energy,final_energy,initial_max,final_max\n";
  const PotentialSpec pot = PotentialSpec::double_well();
  for (const double u0 : cfg.init.u0_list) {
    ExperimentConfig sub = cfg;
    sub.task = Task::simulate;
    sub.init.u0 = u0;
    sub.init.u0_list.clear();
    std::ostringstream tag;
    tag << std::fixed << std::setprecision(2) << u0;
    sub.out_dir = (fs::path(cfg.out_dir) / ("u0_" + tag.str())).string();
    sub.name = cfg.name + "_u0_" + tag.str();

    double e0 = 0, emax = 0, efin = 0, m0 = 0, mfin = 0;
    RunOptions o = opt;
    o.observer = [&](long step, double, const GridField& U) {
      GridField d = U;
      d += -mean(U);
      const double e = inner_h(d, d), m = norm_inf(d);
      if (step == 0) {
        e0 = e;
        m0 = m;
      }
      emax = std::max(emax, e);
      efin = e;
      mfin = m;
    };
    const RunArtifacts r = run_simulation(sub, o);
    detail::absorb(art, r, "u0_" + tag.str() + ".");
    const bool unstable = spinodal_classify(pot, u0) == Stability::unstable;
    if (unstable) {
      const double g = emax / e0;
      art.monitors.push_back({"u0_" + tag.str() + ".perturbation_growth", g, 10.0, g >= 10.0});
      art.results.emplace_back("growth_" + tag.str(), g);
    } else {
      const double q = mfin / m0;
      art.monitors.push_back({"u0_" + tag.str() + ".perturbation_decay", q, 0.1, q <= 0.1});
      art.results.emplace_back("decay_" + tag.str(), q);
    }
    csv << u0 << "," << pot.d2F(u0) << "," << (unstable ? "unstable" : "stable") << "," << e0 << ","
        << emax << "," << efin << "," << m0 << "," << mfin << "\n";
  }
  detail::finish_task(cfg, art, opt);
  if (opt.write) detail::write_text(fs::path(cfg.out_dir) / "spinodal.csv", csv.str());
  return art;
}

/// Temporal convergence: each dt in order_dts against a run at order_dt_ref,
/// errors in the discrete L2 norm at t_end.
inline RunArtifacts run_time_order(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
  namespace fs = std::filesystem;
  cfg.validate();
  RunArtifacts art;
  art.dir = cfg.out_dir;
  RunOptions quiet = opt;
  quiet.write = false;
  auto run_dt = [&](double dt) {
    ExperimentConfig sub = cfg;
    sub.task = Task::simulate;
    sub.dt = dt;
    sub.dt_start = 0.0;
    sub.log_every = 1000000;
    sub.orientations = sub.coarsening = false;
    RunArtifacts r = run_simulation(sub, quiet);
    detail::absorb(art, r, "dt_" + detail::num(dt) + ".");
    return r;
  };
  const RunArtifacts ref = run_dt(cfg.order_dt_ref);
  std::vector<double> errs;
  std::ostringstream csv;
  csv << std::setprecision(17) << "dt,error,ratio\n";
  for (std::size_t k = 0; k < cfg.order_dts.size(); ++k) {
    const RunArtifacts r = run_dt(cfg.order_dts[k]);
    if (r.failed || ref.failed) break;
    errs.push_back(norm_h(*r.final_field - *ref.final_field));
    const double ratio = k ? errs[k - 1] / errs[k] : NAN;
    csv << cfg.order_dts[k] << "," << errs[k] << "," << ratio << "\n";
    if (k) {
      art.monitors.push_back({"error_ratio_" + std::to_string(k), ratio, 4.0, ratio >= 3.5 && ratio <= 4.5});
      art.results.emplace_back("ratio_" + std::to_string(k), ratio);
    }
  }
  if (errs.size() == cfg.order_dts.size()) {
    const double p = temporal_order(cfg.order_dts, errs);
    art.results.emplace_back("order", p);
    art.monitors.push_back({"temporal_order", p, 2.0, p >= 1.8 && p <= 2.2});
    csv << "# order," << p << "\n";
  } else {
    art.monitors.push_back({"temporal_order", NAN, 2.0, false});
  }
  detail::finish_task(cfg, art, opt);
  if (opt.write) detail::write_text(fs::path(cfg.out_dir) / "order.csv", csv.str());
  return art;
}

/// Measured per-step growth of a single Fourier mode cos(k x) of amplitude
/// disp_amplitude about u0 under the isotropic scheme; one factor per step.
inline std::vector<double> measure_mode_growth(const ExperimentConfig& cfg, int kx, int ky,
                                               std::ostream* progress = nullptr,
                                               RunArtifacts* sink = nullptr) {
  ExperimentConfig sub = cfg;
  sub.task = Task::simulate;
  sub.model = ModelKind::iso;
  sub.init.kind = "single_mode";
  sub.init.amplitude = cfg.disp_amplitude;
  sub.init.mode_kx = kx;
  sub.init.mode_ky = ky;
  sub.dt_start = 0.0;
  sub.t_end = cfg.dt * cfg.disp_steps;
  sub.orientations = sub.coarsening = false;
  sub.log_every = 1000000;
  sub.energy_tol = INFINITY;  // linear-growth runs are far from equilibrium
  const GridField basis = make_initial({"single_mode", 0, 0.0, 1.0, 0.5, kx, ky, {}}, sub.grid, 1.0);
  const double bb = inner_h(basis, basis);
  std::vector<double> amp;
  RunOptions o;
  o.write = false;
  o.progress = progress;
  o.observer = [&](long, double, const GridField& U) {
    GridField d = U;
    d += -cfg.init.u0;
    amp.push_back(inner_h(d, basis) / bb);
  };
  const RunArtifacts r = run_simulation(sub, o);
  if (r.failed) throw StepFailure("mode growth run failed: " + r.failure, SolveReport{});
  if (sink) {
    const std::string tag = "mode_" + std::to_string(kx) + "_" + std::to_string(ky) + ".";
    for (const auto& m : r.monitors)
      if (m.name == "mass_drift") sink->monitors.push_back({tag + m.name, m.value, m.threshold, m.pass});
  }
  std::vector<double> g;
  for (std::size_t k = 1; k < amp.size(); ++k) g.push_back(amp[k] / amp[k - 1]);
  return g;
}

/// Growth-rate and amplification maps for both models, plus the check that
/// the isotropic scheme amplifies single modes by g_IM.
inline RunArtifacts run_dispersion_map(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
  namespace fs = std::filesystem;
  cfg.validate();
  RunArtifacts art;
  art.dir = cfg.out_dir;
  DispersionSpec iso{cfg.params.model, cfg.init.u0, PotentialSpec::double_well(), std::nullopt};
  DispersionSpec an = iso;
  an.gamma = cfg.params.gamma.alpha > 0.0 ? cfg.params.gamma : GammaSpec{Fold::fourfold, 0.1};
  if (opt.write) {
    fs::create_directories(cfg.out_dir);
    for (const auto& [tag, spec] : {std::pair{"iso", iso}, std::pair{"aniso", an}}) {
      auto dump = [&](const std::string& file, Method m, bool growth) {
        std::ostringstream os;
        os << std::setprecision(17) << "kx,ky,value\n";
        for (const auto& r : dispersion_sweep(spec, m, cfg.disp_dt, cfg.disp_kmax,
                                              static_cast<std::size_t>(cfg.disp_n), growth))
          os << r.kx << "," << r.ky << "," << r.value << "\n";
        detail::write_text(fs::path(cfg.out_dir) / file, os.str());
      };
      dump(std::string("growth_") + tag + ".csv", Method::exact, true);
      for (Method m : {Method::EE, Method::IE, Method::IM, Method::exact})
        dump("amp_" + to_string(m) + "_" + tag + ".csv", m, false);
    }
  }
  std::ostringstream link;
  link << std::setprecision(17) << "k,step,measured,g_IM,rel_error\n";
  const Grid& g = cfg.grid;
  for (int k : {1, 2, 3}) {
    const double kk = k * 2.0 * std::numbers::pi / g.lx();
    const double gim = amplification(Method::IM, iso, kk, 0.0, cfg.dt);
    double worst = 0.0;
    try {
      const auto meas = measure_mode_growth(cfg, k, 0, opt.progress, &art);
      for (std::size_t s = 0; s < meas.size(); ++s) {
        const double rel = std::abs(meas[s] - gim) / std::abs(gim);
        worst = std::max(worst, rel);
        link << k << "," << s + 1 << "," << meas[s] << "," << gim << "," << rel << "\n";
      }
    } catch (const Error& e) {
      art.failed = true;
      art.failure += e.what();
      worst = INFINITY;
    }
    art.results.emplace_back("link_k" + std::to_string(k), worst);
    art.monitors.push_back({"link_rel_error_k" + std::to_string(k), worst, 1e-6, worst <= 1e-6});
  }
  detail::finish_task(cfg, art, opt);
  if (opt.write) detail::write_text(fs::path(cfg.out_dir) / "link.csv", link.str());
  return art;
}

inline RunArtifacts run_experiment(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
  switch (cfg.task) {
    case Task::simulate: return run_simulation(cfg, opt);
    case Task::spinodal: return run_spinodal(cfg, opt);
    case Task::time_order: return run_time_order(cfg, opt);
    case Task::dispersion_map: return run_dispersion_map(cfg, opt);
  }
  throw InvalidArgument("unknown task");
}

}  // namespace qce
