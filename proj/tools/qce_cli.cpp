// Command-line front end: run configs and presets, analyze artifacts,
// write dispersion sweeps.

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "qce/analysis.hpp"
#include "qce/config.hpp"
#include "qce/runner.hpp"

namespace fs = std::filesystem;
using namespace qce;

namespace {

enum Exit { kOk = 0, kMonitorFailed = 1, kStepFailed = 2, kUsage = 3 };

int report(const RunArtifacts& art) {
  std::cout << std::setprecision(6);
  for (const auto& m : art.monitors)
    std::cout << (m.pass ? "  ok   " : "  FAIL ") << m.name << " = " << m.value << " (threshold " << m.threshold << ")\n";
  for (const auto& [k, v] : art.results) std::cout << "  result " << k << " = " << v << "\n";
  if (!art.failure.empty()) std::cout << "  failure: " << art.failure;
  std::cout << "artifacts: " << art.dir << "\n";
  if (art.failed) return kStepFailed;
  return art.all_passed() ? kOk : kMonitorFailed;
}

int execute(Ini ini, const std::vector<std::string>& overrides, const std::string& out, bool quiet) {
  for (const auto& o : overrides) ini.apply_override(o);
  if (!out.empty()) ini.set("output.dir", out);
  const ExperimentConfig cfg = ExperimentConfig::from_ini(ini);
  RunOptions opt;
  if (!quiet) opt.progress = &std::cerr;
  return report(run_experiment(cfg, opt));
}

int run_sweep(const std::vector<std::string>& paths, const std::vector<std::string>& overrides,
              unsigned jobs) {
  std::vector<ExperimentConfig> cfgs;
  std::set<fs::path> dirs;
  for (const auto& p : paths) {
    Ini ini = Ini::load(p);
    for (const auto& o : overrides) ini.apply_override(o);
    cfgs.push_back(ExperimentConfig::from_ini(ini));
    if (!dirs.insert(fs::weakly_canonical(cfgs.back().out_dir)).second)
      throw InvalidArgument("sweep configs share output directory '" + cfgs.back().out_dir + "'");
  }
  std::vector<int> codes(cfgs.size(), kUsage);
  std::vector<std::string> reports(cfgs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k; (k = next++) < cfgs.size();) {
      std::ostringstream os;
      try {
        const RunArtifacts art = run_experiment(cfgs[k]);
        codes[k] = art.failed ? kStepFailed : (art.all_passed() ? kOk : kMonitorFailed);
        os << (codes[k] == kOk ? "PASS " : "FAIL ") << cfgs[k].name << " -> " << art.dir << "\n";
        for (const auto& m : art.monitors)
          if (!m.pass) os << "  FAIL " << m.name << " = " << m.value << "\n";
      } catch (const std::exception& e) {
        os << "ERROR " << cfgs[k].name << ": " << e.what() << "\n";
      }
      reports[k] = os.str();
    }
  };
  std::vector<std::thread> pool;
  for (unsigned j = 0; j < std::min<std::size_t>(jobs, cfgs.size()); ++j) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  int worst = kOk;
  for (std::size_t k = 0; k < cfgs.size(); ++k) {
    std::cout << reports[k];
    worst = std::max(worst, codes[k]);
  }
  return worst;
}

std::vector<std::vector<double>> read_csv(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw FormatError("cannot open '" + p.string() + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  std::getline(is, line);  // header
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> r;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        r.push_back(std::stod(cell));
      } catch (const std::exception&) {
        r.push_back(NAN);
      }
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

ExperimentConfig artifact_config(const fs::path& dir) {
  return ExperimentConfig::from_ini(Ini::load((dir / "config.ini").string()));
}

int analyze(const fs::path& dir, bool coarsening, bool order, bool orientations, double t0, double t1) {
  if (coarsening + order + orientations != 1) {
    std::cerr << "choose exactly one of --coarsening, --order, --orientations\n";
    return kUsage;
  }
  RunArtifacts art;
  art.dir = dir.string();
  if (order) {
    std::vector<double> dts, errs;
    for (const auto& r : read_csv(dir / "order.csv")) {
      dts.push_back(r.at(0));
      errs.push_back(r.at(1));
    }
    const double p = temporal_order(dts, errs);
    for (std::size_t k = 1; k < errs.size(); ++k) {
      const double ratio = errs[k - 1] / errs[k];
      art.monitors.push_back({"error_ratio_" + std::to_string(k), ratio, 4.0, ratio >= 3.5 && ratio <= 4.5});
    }
    art.results.emplace_back("order", p);
    art.monitors.push_back({"temporal_order", p, 2.0, p >= 1.8 && p <= 2.2});
    return report(art);
  }
  ExperimentConfig cfg = artifact_config(dir);
  if (coarsening) {
    for (const auto& r : read_csv(dir / "energy.csv")) art.log.push_back({r.at(0), r.at(1), r.at(2), 0, 0.0});
    if (t0 > 0.0 || t1 > 0.0) {
      std::vector<double> t, e;
      for (const auto& r : art.log)
        if (r.t > 0.0) {
          t.push_back(r.t);
          e.push_back(r.energy / cfg.grid.area());
        }
      const LineFit f = coarsening_slope(t, e, t0 > 0.0 ? t0 : t.back() / 10.0, t1 > 0.0 ? t1 : t.back());
      const double dev = std::abs(f.slope - cfg.coarsening_target);
      art.results.emplace_back("coarsening_slope", f.slope);
      art.results.emplace_back("r2", f.r2);
      art.monitors.push_back({"coarsening_slope_deviation", dev, cfg.coarsening_tol, dev <= cfg.coarsening_tol});
    } else {
      detail::add_coarsening_analysis(cfg, art, dir, true);
    }
    return report(art);
  }
  const auto rows = [&] {
    std::ifstream is(dir / "snapshots" / "index.csv");
    if (!is) throw FormatError("no snapshot index in '" + dir.string() + "'");
    std::string line, last;
    std::getline(is, line);
    while (std::getline(is, line))
      if (!line.empty()) last = line;
    return last;
  }();
  if (rows.empty()) throw FormatError("snapshot index is empty");
  const std::string file = rows.substr(rows.rfind(',') + 1);
  const Grid& g = cfg.grid;
  art.final_field = load_field((dir / "snapshots" / file).string(), g.ax, g.bx, g.ay, g.by);
  detail::add_orientation_analysis(cfg, art, dir, true);
  std::cout << "snapshot: " << file << "\n";
  return report(art);
}

int dispersion(const std::string& model, const std::string& method, const std::string& out, double eps,
               double beta, double mobility, double alpha, const std::string& fold, double u0, double dt,
               double kmax, int n, bool growth) {
  DispersionSpec s;
  s.model = {mobility, eps, beta};
  s.u0 = u0;
  s.validate();
  if (model == "aniso") s.gamma = GammaSpec{fold == "twofold" ? Fold::twofold : Fold::fourfold, alpha};
  else if (model != "iso") throw InvalidArgument("--model must be iso or aniso");
  const Method m = parse_method(method);
  std::ofstream os(out);
  if (!os) throw FormatError("cannot write '" + out + "'");
  os << std::setprecision(17) << "kx,ky,value\n";
  for (const auto& r : dispersion_sweep(s, m, dt, kmax, static_cast<std::size_t>(n), growth))
    os << r.kx << "," << r.ky << "," << r.value << "\n";
  std::cout << "wrote " << out << " (" << n * n << " rows)\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structure-preserving Cahn-Hilliard solver"};
  app.require_subcommand(1);

  std::vector<std::string> overrides;
  std::string out;
  bool quiet = false;

  auto* run = app.add_subcommand("run", "Run an experiment from a config file");
  std::vector<std::string> config_paths;
  bool sweep = false;
  unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
  run->add_option("config", config_paths, "Config file(s); several require --sweep")
      ->required()
      ->check(CLI::ExistingFile);
  run->add_flag("--sweep", sweep, "Run independent configs in parallel, one per worker");
  run->add_option("--jobs", jobs, "Worker count for --sweep")->check(CLI::PositiveNumber);
  run->add_option("--override", overrides, "section.key=value, repeatable");
  run->add_option("--out", out, "Output directory (overrides output.dir)");
  run->add_flag("--quiet", quiet, "No progress output");

  auto* pre = app.add_subcommand("preset", "Run a named preset");
  std::string preset_name;
  bool list = false, print = false;
  pre->add_option("name", preset_name, "Preset name");
  pre->add_option("--override", overrides, "section.key=value, repeatable");
  pre->add_option("--out", out, "Output directory (overrides output.dir)");
  pre->add_flag("--quiet", quiet, "No progress output");
  pre->add_flag("--list", list, "List preset names");
  pre->add_flag("--print", print, "Print the preset config instead of running it");

  auto* ana = app.add_subcommand("analyze", "Analyze an artifact directory");
  std::string adir;
  bool coarse = false, order = false, orient = false;
  double t0 = 0.0, t1 = 0.0;
  ana->add_option("dir", adir, "Artifact directory")->required()->check(CLI::ExistingDirectory);
  ana->add_flag("--coarsening", coarse, "Fit the log-log energy density slope");
  ana->add_flag("--order", order, "Temporal order from order.csv");
  ana->add_flag("--orientations", orient, "Normal-angle histogram of the last snapshot");
  ana->add_option("--t0", t0, "Coarsening window start (default: last decade)");
  ana->add_option("--t1", t1, "Coarsening window end");

  auto* disp = app.add_subcommand("dispersion", "Write a dispersion or amplification sweep");
  std::string model = "iso", method = "IM", dout, fold = "fourfold";
  double eps = 0.1, beta = 0.0, mob = 1.0, alpha = 0.1, u0 = 0.0, dt = 1e-3, kmax = 20.0;
  int n = 81;
  bool growth = false;
  disp->add_option("--model", model, "iso or aniso")->check(CLI::IsMember({"iso", "aniso"}));
  disp->add_option("--method", method, "EE, IE, IM or exact")->check(CLI::IsMember({"EE", "IE", "IM", "exact"}));
  disp->add_option("--out", dout, "Output CSV")->required();
  disp->add_option("--eps", eps);
  disp->add_option("--beta", beta);
  disp->add_option("--mobility", mob);
  disp->add_option("--alpha", alpha);
  disp->add_option("--fold", fold)->check(CLI::IsMember({"twofold", "fourfold"}));
  disp->add_option("--u0", u0);
  disp->add_option("--dt", dt);
  disp->add_option("--kmax", kmax);
  disp->add_option("--n", n);
  disp->add_flag("--growth", growth, "Write lambda instead of the amplification factor");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      if (sweep) return run_sweep(config_paths, overrides, jobs);
      if (config_paths.size() != 1) {
        std::cerr << "several config files require --sweep\n";
        return kUsage;
      }
      return execute(Ini::load(config_paths.front()), overrides, out, quiet);
    }
    if (*pre) {
      if (list) {
        for (const auto& p : preset_names()) std::cout << p << "\n";
        return kOk;
      }
      if (preset_name.empty()) {
        std::cerr << "preset name required (see --list)\n";
        return kUsage;
      }
      Ini ini = preset(preset_name).to_ini();
      if (print) {
        for (const auto& o : overrides) ini.apply_override(o);
        std::cout << ExperimentConfig::from_ini(ini).to_ini().text();
        return kOk;
      }
      return execute(ini, overrides, out, quiet);
    }
    if (*ana) return analyze(adir, coarse, order, orient, t0, t1);
    if (*disp) return dispersion(model, method, dout, eps, beta, mob, alpha, fold, u0, dt, kmax, n, growth);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
