#pragma once

// Experiment configuration: an INI-like text format and the preset catalog.
//
//   # comment
//   [section]
//   key = value
//
// Keys are addressed as "section.key". Lists are comma separated.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "qce/ch_aniso.hpp"
#include "qce/error.hpp"
#include "qce/fixedpoint.hpp"
#include "qce/params.hpp"
#include "qce/spectral_grid.hpp"

namespace qce {

class Ini {
 public:
  static Ini parse(const std::string& text) {
    Ini ini;
    std::istringstream is(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') throw FormatError("line " + std::to_string(lineno) + ": unterminated section");
        section = trim(line.substr(1, line.size() - 2));
        if (section.empty()) throw FormatError("line " + std::to_string(lineno) + ": empty section name");
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw FormatError("line " + std::to_string(lineno) + ": expected key = value");
      const std::string key = trim(line.substr(0, eq));
      if (key.empty()) throw FormatError("line " + std::to_string(lineno) + ": empty key");
      ini.set(section.empty() ? key : section + "." + key, trim(line.substr(eq + 1)));
    }
    return ini;
  }

  static Ini load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot open config '" + path + "'");
    std::stringstream ss;
    ss << is.rdbuf();
    return parse(ss.str());
  }

  void set(const std::string& key, const std::string& value) { kv_[key] = value; }

  /// Applies "section.key=value".
  void apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw InvalidArgument("override must look like section.key=value");
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
  }

  bool has(const std::string& key) const { return kv_.count(key) != 0; }
  const std::map<std::string, std::string>& entries() const { return kv_; }

  std::string text() const {
    std::ostringstream os;
    std::optional<std::string> current;
    for (const auto& [k, v] : kv_) {
      const auto dot = k.find('.');
      const std::string sec = dot == std::string::npos ? "" : k.substr(0, dot);
      const std::string key = dot == std::string::npos ? k : k.substr(dot + 1);
      if (sec != current) {
        if (current) os << "\n";
        if (!sec.empty()) os << "[" << sec << "]\n";
        current = sec;
      }
      os << key << " = " << v << "\n";
    }
    return os.str();
  }

  static std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
  }

 private:
  std::map<std::string, std::string> kv_;
};

enum class Task { simulate, spinodal, time_order, dispersion_map };
enum class ModelKind { iso, aniso };

struct InitSpec {
  std::string kind = "single_droplet";  // two_droplet | single_droplet | uniform_random | gaussian_perturbed | single_mode
  std::uint64_t seed = 0;
  double u0 = 0.0;
  double amplitude = 1.0;
  double radius = 0.5;  // single droplet radius in units of pi
  int mode_kx = 1, mode_ky = 0;
  std::vector<double> u0_list;  // spinodal sweep
};

struct ExperimentConfig {
  std::string name = "custom";
  Task task = Task::simulate;
  ModelKind model = ModelKind::iso;
  Grid grid{128, 128};
  AnisoParams params{};
  double delta_reg = kDefaultDeltaReg;
  PsiForm psi = PsiForm::average;

  double dt = 1e-4;
  double t_end = 1e-2;
  double dt_start = 0.0;   // 0: constant dt
  double dt_growth = 1.0;  // per-step factor from dt_start up to dt

  FixedPointConfig fp{};
  InitSpec init{};

  std::string out_dir = "out";
  int snapshot_every = 0;  // 0: initial and final only
  int log_every = 1;

  // Monitor thresholds; energy_tol < 0 selects 10 fp_tol.
  double energy_tol = -1.0;
  double mass_tol = 1e-10;
  double casimir_tol = 1e-10;
  double square_tol = 1e-9;
  bool check_reciprocal = false;  // unregularized |Y4 Y3 - 1| on Y3 >= 1e-8

  // Post-run analysis.
  bool orientations = false;
  std::string expect_gaps = "any";  // none | some | any
  bool coarsening = false;
  double coarsening_target = -1.0 / 3.0;
  double coarsening_tol = 0.05;

  std::vector<double> order_dts{4e-4, 2e-4, 1e-4};
  double order_dt_ref = 1.25e-5;

  double disp_dt = 1e-3;
  double disp_kmax = 20.0;
  int disp_n = 81;
  double disp_amplitude = 1e-8;
  int disp_steps = 10;

  double effective_energy_tol() const { return energy_tol < 0.0 ? 10.0 * fp.fp_tol : energy_tol; }

  void validate() const {
    grid.validate();
    params.model.validate();
    fp.validate();
    if (model == ModelKind::aniso) params.validate_for_stepping();
    if (!(dt > 0.0)) throw InvalidArgument("dt must be positive");
    if (!(t_end > dt) && task != Task::dispersion_map) throw InvalidArgument("t_end must exceed dt");
    if (dt_start < 0.0 || dt_start > dt) throw InvalidArgument("dt_start must lie in [0, dt]");
    if (!(dt_growth >= 1.0)) throw InvalidArgument("dt_growth must be >= 1");
    if (snapshot_every < 0 || log_every < 1) throw InvalidArgument("bad snapshot/log cadence");
    if (expect_gaps != "none" && expect_gaps != "some" && expect_gaps != "any")
      throw InvalidArgument("expect_gaps must be none, some or any");
    if (task == Task::time_order) {
      if (order_dts.size() < 2) throw InvalidArgument("time_order needs at least two dt values");
      for (std::size_t k = 1; k < order_dts.size(); ++k)
        if (!(order_dts[k] < order_dts[k - 1])) throw InvalidArgument("order dts must decrease");
      if (!(order_dt_ref > 0.0 && order_dt_ref < order_dts.back()))
        throw InvalidArgument("order dt_ref must be smaller than every dt");
    }
    if (task == Task::spinodal && init.u0_list.empty()) throw InvalidArgument("spinodal needs init.u0_list");
  }

  Ini to_ini() const;
  static ExperimentConfig from_ini(const Ini& ini);
};

namespace detail {

inline std::string fmt(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::string fmt_list(const std::vector<double>& v) {
  std::string s;
  for (std::size_t k = 0; k < v.size(); ++k) s += (k ? ", " : "") + fmt(v[k]);
  return s;
}

inline double parse_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw InvalidArgument(key + ": expected a number, got '" + v + "'");
  }
  if (pos != v.size()) throw InvalidArgument(key + ": trailing characters in '" + v + "'");
  return d;
}

inline long long parse_int(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  long long d = 0;
  try {
    d = std::stoll(v, &pos);
  } catch (const std::exception&) {
    throw InvalidArgument(key + ": expected an integer, got '" + v + "'");
  }
  if (pos != v.size()) throw InvalidArgument(key + ": trailing characters in '" + v + "'");
  return d;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw InvalidArgument(key + ": expected true or false, got '" + v + "'");
}

inline std::vector<double> parse_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(key, Ini::trim(item)));
  return out;
}

inline std::string method_name(FixedPointMethod m) {
  switch (m) {
    case FixedPointMethod::mann: return "mann";
    case FixedPointMethod::anderson: return "anderson";
    case FixedPointMethod::newton_krylov: return "newton_krylov";
  }
  return "mann";
}

inline std::string task_name(Task t) {
  switch (t) {
    case Task::simulate: return "simulate";
    case Task::spinodal: return "spinodal";
    case Task::time_order: return "time_order";
    case Task::dispersion_map: return "dispersion_map";
  }
  return "simulate";
}

}  // namespace detail

inline Ini ExperimentConfig::to_ini() const {
  using detail::fmt;
  Ini i;
  i.set("experiment.name", name);
  i.set("experiment.task", detail::task_name(task));
  i.set("experiment.model", model == ModelKind::iso ? "iso" : "aniso");
  i.set("grid.nx", std::to_string(grid.nx));
  i.set("grid.ny", std::to_string(grid.ny));
  i.set("grid.ax", fmt(grid.ax));
  i.set("grid.bx", fmt(grid.bx));
  i.set("grid.ay", fmt(grid.ay));
  i.set("grid.by", fmt(grid.by));
  i.set("model.mobility", fmt(params.model.mobility));
  i.set("model.eps", fmt(params.model.eps));
  i.set("model.beta", fmt(params.model.beta));
  i.set("model.alpha", fmt(params.gamma.alpha));
  i.set("model.fold", to_string(params.gamma.fold));
  i.set("model.delta_reg", fmt(delta_reg));
  i.set("model.psi_form", psi == PsiForm::average ? "average" : "midpoint");
  i.set("time.dt", fmt(dt));
  i.set("time.t_end", fmt(t_end));
  i.set("time.dt_start", fmt(dt_start));
  i.set("time.dt_growth", fmt(dt_growth));
  i.set("solver.method", detail::method_name(fp.method));
  i.set("solver.omega", fmt(fp.omega));
  i.set("solver.fp_tol", fmt(fp.fp_tol));
  i.set("solver.max_iter", std::to_string(fp.max_iter));
  i.set("solver.divergence_factor", fmt(fp.divergence_factor));
  i.set("solver.anderson_depth", std::to_string(fp.anderson_depth));
  i.set("solver.krylov_dim", std::to_string(fp.krylov_dim));
  i.set("init.kind", init.kind);
  i.set("init.seed", std::to_string(init.seed));
  i.set("init.u0", fmt(init.u0));
  i.set("init.amplitude", fmt(init.amplitude));
  i.set("init.radius", fmt(init.radius));
  i.set("init.mode_kx", std::to_string(init.mode_kx));
  i.set("init.mode_ky", std::to_string(init.mode_ky));
  if (!init.u0_list.empty()) i.set("init.u0_list", detail::fmt_list(init.u0_list));
  i.set("output.dir", out_dir);
  i.set("output.snapshot_every", std::to_string(snapshot_every));
  i.set("output.log_every", std::to_string(log_every));
  i.set("monitors.energy_tol", fmt(energy_tol));
  i.set("monitors.mass_tol", fmt(mass_tol));
  i.set("monitors.casimir_tol", fmt(casimir_tol));
  i.set("monitors.square_tol", fmt(square_tol));
  i.set("monitors.check_reciprocal", check_reciprocal ? "true" : "false");
  i.set("analysis.orientations", orientations ? "true" : "false");
  i.set("analysis.expect_gaps", expect_gaps);
  i.set("analysis.coarsening", coarsening ? "true" : "false");
  i.set("analysis.coarsening_target", fmt(coarsening_target));
  i.set("analysis.coarsening_tol", fmt(coarsening_tol));
  i.set("order.dts", detail::fmt_list(order_dts));
  i.set("order.dt_ref", fmt(order_dt_ref));
  i.set("dispersion.dt", fmt(disp_dt));
  i.set("dispersion.kmax", fmt(disp_kmax));
  i.set("dispersion.n", std::to_string(disp_n));
  i.set("dispersion.amplitude", fmt(disp_amplitude));
  i.set("dispersion.steps", std::to_string(disp_steps));
  return i;
}

inline ExperimentConfig ExperimentConfig::from_ini(const Ini& ini) {
  using namespace detail;
  ExperimentConfig c;
  std::size_t nx = c.grid.nx, ny = c.grid.ny;
  double ax = c.grid.ax, bx = c.grid.bx, ay = c.grid.ay, by = c.grid.by;
  bool seed_given = false;
  for (const auto& [k, v] : ini.entries()) {
    auto d = [&] { return parse_double(k, v); };
    auto n = [&] { return parse_int(k, v); };
    if (k == "experiment.name") c.name = v;
    else if (k == "experiment.task") {
      if (v == "simulate") c.task = Task::simulate;
      else if (v == "spinodal") c.task = Task::spinodal;
      else if (v == "time_order") c.task = Task::time_order;
      else if (v == "dispersion_map") c.task = Task::dispersion_map;
      else throw InvalidArgument(k + ": unknown task '" + v + "'");
    } else if (k == "experiment.model") {
      if (v == "iso") c.model = ModelKind::iso;
      else if (v == "aniso") c.model = ModelKind::aniso;
      else throw InvalidArgument(k + ": expected iso or aniso");
    } else if (k == "grid.nx") nx = static_cast<std::size_t>(n());
    else if (k == "grid.ny") ny = static_cast<std::size_t>(n());
    else if (k == "grid.ax") ax = d();
    else if (k == "grid.bx") bx = d();
    else if (k == "grid.ay") ay = d();
    else if (k == "grid.by") by = d();
    else if (k == "model.mobility") c.params.model.mobility = d();
    else if (k == "model.eps") c.params.model.eps = d();
    else if (k == "model.beta") c.params.model.beta = d();
    else if (k == "model.alpha") c.params.gamma.alpha = d();
    else if (k == "model.fold") {
      if (v == "twofold") c.params.gamma.fold = Fold::twofold;
      else if (v == "fourfold") c.params.gamma.fold = Fold::fourfold;
      else throw InvalidArgument(k + ": expected twofold or fourfold");
    } else if (k == "model.delta_reg") c.delta_reg = d();
    else if (k == "model.psi_form") {
      if (v == "average") c.psi = PsiForm::average;
      else if (v == "midpoint") c.psi = PsiForm::midpoint;
      else throw InvalidArgument(k + ": expected average or midpoint");
    } else if (k == "time.dt") c.dt = d();
    else if (k == "time.t_end") c.t_end = d();
    else if (k == "time.dt_start") c.dt_start = d();
    else if (k == "time.dt_growth") c.dt_growth = d();
    else if (k == "solver.method") {
      if (v == "mann") c.fp.method = FixedPointMethod::mann;
      else if (v == "anderson") c.fp.method = FixedPointMethod::anderson;
      else if (v == "newton_krylov") c.fp.method = FixedPointMethod::newton_krylov;
      else throw InvalidArgument(k + ": expected mann, anderson or newton_krylov");
    } else if (k == "solver.omega") c.fp.omega = d();
    else if (k == "solver.fp_tol") c.fp.fp_tol = d();
    else if (k == "solver.max_iter") c.fp.max_iter = static_cast<int>(n());
    else if (k == "solver.divergence_factor") c.fp.divergence_factor = d();
    else if (k == "solver.anderson_depth") c.fp.anderson_depth = static_cast<int>(n());
    else if (k == "solver.krylov_dim") c.fp.krylov_dim = static_cast<int>(n());
    else if (k == "init.kind") c.init.kind = v;
    else if (k == "init.seed") {
      if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
        throw InvalidArgument(k + ": expected a non-negative integer");
      c.init.seed = std::stoull(v);
      seed_given = true;
    } else if (k == "init.u0") c.init.u0 = d();
    else if (k == "init.amplitude") c.init.amplitude = d();
    else if (k == "init.radius") c.init.radius = d();
    else if (k == "init.mode_kx") c.init.mode_kx = static_cast<int>(n());
    else if (k == "init.mode_ky") c.init.mode_ky = static_cast<int>(n());
    else if (k == "init.u0_list") c.init.u0_list = parse_list(k, v);
    else if (k == "output.dir") c.out_dir = v;
    else if (k == "output.snapshot_every") c.snapshot_every = static_cast<int>(n());
    else if (k == "output.log_every") c.log_every = static_cast<int>(n());
    else if (k == "monitors.energy_tol") c.energy_tol = d();
    else if (k == "monitors.mass_tol") c.mass_tol = d();
    else if (k == "monitors.casimir_tol") c.casimir_tol = d();
    else if (k == "monitors.square_tol") c.square_tol = d();
    else if (k == "monitors.check_reciprocal") c.check_reciprocal = parse_bool(k, v);
    else if (k == "analysis.orientations") c.orientations = parse_bool(k, v);
    else if (k == "analysis.expect_gaps") c.expect_gaps = v;
    else if (k == "analysis.coarsening") c.coarsening = parse_bool(k, v);
    else if (k == "analysis.coarsening_target") c.coarsening_target = d();
    else if (k == "analysis.coarsening_tol") c.coarsening_tol = d();
    else if (k == "order.dts") c.order_dts = parse_list(k, v);
    else if (k == "order.dt_ref") c.order_dt_ref = d();
    else if (k == "dispersion.dt") c.disp_dt = d();
    else if (k == "dispersion.kmax") c.disp_kmax = d();
    else if (k == "dispersion.n") c.disp_n = static_cast<int>(n());
    else if (k == "dispersion.amplitude") c.disp_amplitude = d();
    else if (k == "dispersion.steps") c.disp_steps = static_cast<int>(n());
    else throw InvalidArgument("unknown config key '" + k + "'");
  }
  if (!seed_given) throw InvalidArgument("init.seed must be given explicitly");
  c.grid = Grid(nx, ny, ax, bx, ay, by);
  c.validate();
  return c;
}

/// Named experiment catalog. Every preset runs on 128^2 over [0, 2 pi]^2
/// unless stated otherwise.
inline std::vector<std::string> preset_names() {
  return {"iso_two_droplet", "spinodal",     "coarsening",   "aniso_single", "aniso_double",
          "aniso_random",    "aniso_facet",  "aniso_smooth", "aniso_casimir", "dispersion_map",
          "time_order"};
}

inline ExperimentConfig preset(const std::string& name) {
  ExperimentConfig c;
  c.name = name;
  c.out_dir = "runs/" + name;
  c.init.seed = 20240601;
  c.params.model = {1.0, 0.1, 0.0};
  c.log_every = 10;

  auto aniso = [&c](double alpha) {
    c.model = ModelKind::aniso;
    c.params.model = {1.0, 0.2, 6e-4};
    c.params.gamma = {Fold::fourfold, alpha};
    c.delta_reg = 1e-2;
    c.fp.method = FixedPointMethod::anderson;
    c.fp.max_iter = 500;
    c.dt = 1e-4;
    c.init.kind = "single_droplet";
    c.log_every = 1;
  };

  if (name == "iso_two_droplet") {
    c.init.kind = "two_droplet";
    c.dt = 1e-4;
    c.t_end = 0.5;
    c.snapshot_every = 1000;
    c.orientations = true;
    c.expect_gaps = "none";
  } else if (name == "spinodal") {
    c.task = Task::spinodal;
    c.init.kind = "gaussian_perturbed";
    c.init.amplitude = 0.01;
    c.init.u0_list = {0.0, 0.70, 0.95};
    c.dt = 1e-4;
    c.dt_start = 1e-8;
    c.dt_growth = 1.02;
    c.t_end = 0.05;
    c.log_every = 1;
  } else if (name == "coarsening") {
    c.grid = Grid(256, 256, 0.0, 8.0 * std::numbers::pi, 0.0, 8.0 * std::numbers::pi);
    c.params.model = {1.0, 0.3, 0.0};
    c.init.kind = "uniform_random";
    c.dt = 5e-2;
    c.dt_start = 1e-7;
    c.dt_growth = 1.01;
    c.t_end = 50.0;
    c.fp.method = FixedPointMethod::anderson;
    c.fp.max_iter = 500;
    c.log_every = 1;
    c.coarsening = true;
  } else if (name == "aniso_single") {
    aniso(0.1);
    c.t_end = 0.01;
  } else if (name == "aniso_double") {
    aniso(0.1);
    c.init.kind = "two_droplet";
    c.dt_start = 1e-5;
    c.dt_growth = 1.005;
    c.fp.max_iter = 3000;
    c.t_end = 0.5;
    c.log_every = 10;
    c.snapshot_every = 1000;
  } else if (name == "aniso_random") {
    aniso(0.1);
    c.init.kind = "uniform_random";
    c.grid = Grid(64, 64);
    c.delta_reg = 1.0;
    c.dt = 1e-6;
    c.dt_start = 1e-10;
    c.dt_growth = 1.05;
    c.t_end = 1e-3;
  } else if (name == "aniso_facet" || name == "aniso_smooth") {
    aniso(name == "aniso_facet" ? 0.1 : 0.06);
    c.t_end = 0.1;
    c.log_every = 10;
    c.orientations = true;
    c.expect_gaps = name == "aniso_facet" ? "some" : "none";
  } else if (name == "aniso_casimir") {
    aniso(0.1);
    c.delta_reg = 1e-20;
    c.dt = 1e-7;
    c.t_end = 1e-4;
    c.check_reciprocal = true;
    c.log_every = 10;
  } else if (name == "dispersion_map") {
    c.task = Task::dispersion_map;
    c.init.kind = "single_mode";
    c.dt = 1e-4;
    c.t_end = 1e-3;
    c.fp.fp_tol = 1e-15;
    c.fp.max_iter = 500;
  } else if (name == "time_order") {
    c.task = Task::time_order;
    c.init.kind = "single_mode";
    c.init.amplitude = 0.5;
    c.init.mode_ky = 1;
    c.dt = 4e-4;
    c.t_end = 0.02;
    c.fp.method = FixedPointMethod::anderson;
    c.fp.fp_tol = 1e-13;
    c.fp.max_iter = 500;
    c.log_every = 1000000;
  } else {
    throw InvalidArgument("unknown preset '" + name + "'");
  }
  c.validate();
  return c;
}

}  // namespace qce
