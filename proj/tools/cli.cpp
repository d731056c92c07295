#include "cli.hpp"

#include <filesystem>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "arbproj/error.hpp"
#include "arbproj/io.hpp"
#include "arbproj/lp.hpp"
#include "arbproj/repair.hpp"

namespace arbproj::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

#ifndef ARBPROJ_VERSION
#define ARBPROJ_VERSION "dev"
#endif

constexpr const char* kDeterminismNote =
    "outputs depend only on the fields of this manifest and the input files; no clock or random state is read";

// Values given on the command line; unset ones fall back to the config file,
// then to the RepairConfig defaults.
struct Flags {
  std::optional<std::string> mode;
  std::optional<double> epsilon;
  std::optional<double> e_tol;
  std::optional<double> kmax_margin;
  std::optional<double> shift;
  std::optional<std::size_t> max_iters;
  std::optional<std::string> calibration;
};

struct Invocation {
  std::string command;
  std::string input;
  std::string scenario;
  std::string out = "arbproj_out";
  RepairConfig config;
  bool marks_given = false;
  std::vector<double> eps_list;
};

class StageError : public std::runtime_error {
 public:
  StageError(const std::string& stage, const Error& e)
      : std::runtime_error(stage + ": " + std::string(to_string(e.code())) + ": " + e.what()) {}
};

template <class F>
auto staged(const std::string& stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw StageError(stage, e);
  }
}

void apply_config_file(const fs::path& path, Invocation& inv) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse, "config file: " + std::string(e.what()));
  }
  auto& c = inv.config;
  try {
    if (doc.contains("mode")) c.mode = parse_mode(doc.at("mode").get<std::string>());
    if (doc.contains("epsilon")) c.epsilon = doc.at("epsilon").get<double>();
    if (doc.contains("e_tol")) c.e_tol = doc.at("e_tol").get<double>();
    if (doc.contains("kmax_margin")) c.kmax_margin = doc.at("kmax_margin").get<double>();
    if (doc.contains("shift")) c.shift = doc.at("shift").get<double>();
    if (doc.contains("max_iters")) c.max_iters = doc.at("max_iters").get<std::size_t>();
    if (doc.contains("calibration_marks")) {
      c.calibration_marks.clear();
      for (const auto& mk : doc.at("calibration_marks")) {
        c.calibration_marks.push_back({mk.at(0).get<std::size_t>(), mk.at(1).get<std::size_t>()});
      }
      inv.marks_given = true;
    }
    if (doc.contains("eps_list") && inv.eps_list.empty()) inv.eps_list = doc.at("eps_list").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse, "config file: " + std::string(e.what()));
  }
}

void apply_flags(const Flags& f, Invocation& inv) {
  auto& c = inv.config;
  if (f.mode) c.mode = parse_mode(*f.mode);
  if (f.epsilon) c.epsilon = *f.epsilon;
  if (f.e_tol) c.e_tol = *f.e_tol;
  if (f.kmax_margin) c.kmax_margin = *f.kmax_margin;
  if (f.shift) c.shift = *f.shift;
  if (f.max_iters) c.max_iters = *f.max_iters;
  if (f.calibration) {
    c.calibration_marks = parse_marks(*f.calibration);
    inv.marks_given = true;
  }
}

json manifest_of(const Invocation& inv) {
  json m;
  m["tool"] = "arbproj";
  m["version"] = ARBPROJ_VERSION;
  m["command"] = inv.command;
  m["input"] = inv.input;
  m["scenario"] = inv.scenario.empty() ? json(nullptr) : json(inv.scenario);
  m["output_dir"] = inv.out;
  json c;
  c["mode"] = std::string(to_string(inv.config.mode));
  c["epsilon"] = inv.config.epsilon;
  c["e_tol"] = inv.config.e_tol;
  c["kmax_margin"] = inv.config.kmax_margin;
  c["shift"] = inv.config.shift;
  c["max_iters"] = inv.config.max_iters;
  json marks = json::array();
  for (const auto& mk : inv.config.calibration_marks) marks.push_back(json::array({mk.maturity, mk.strike}));
  c["calibration_marks"] = marks;
  m["config"] = c;
  if (inv.command == "sweep") m["eps_list"] = inv.eps_list;
  m["determinism"] = kDeterminismNote;
  return m;
}

Invocation invocation_from_manifest(const fs::path& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse, "manifest: " + std::string(e.what()));
  }
  Invocation inv;
  try {
    inv.command = doc.at("command").get<std::string>();
    inv.input = doc.at("input").get<std::string>();
    if (!doc.at("scenario").is_null()) inv.scenario = doc.at("scenario").get<std::string>();
    inv.out = doc.at("output_dir").get<std::string>();
    if (doc.contains("eps_list")) inv.eps_list = doc.at("eps_list").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse, "manifest: " + std::string(e.what()));
  }
  json c = doc.value("config", json::object());
  auto& cfg = inv.config;
  try {
    if (c.contains("mode")) cfg.mode = parse_mode(c.at("mode").get<std::string>());
    if (c.contains("epsilon")) cfg.epsilon = c.at("epsilon").get<double>();
    if (c.contains("e_tol")) cfg.e_tol = c.at("e_tol").get<double>();
    if (c.contains("kmax_margin")) cfg.kmax_margin = c.at("kmax_margin").get<double>();
    if (c.contains("shift")) cfg.shift = c.at("shift").get<double>();
    if (c.contains("max_iters")) cfg.max_iters = c.at("max_iters").get<std::size_t>();
    for (const auto& mk : c.value("calibration_marks", json::array())) {
      cfg.calibration_marks.push_back({mk.at(0).get<std::size_t>(), mk.at(1).get<std::size_t>()});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse, "manifest: " + std::string(e.what()));
  }
  inv.marks_given = true;
  return inv;
}

struct Loaded {
  NormalizedSurface original;
  NormalizedSurface surface;  // after the scenario, if any
  bool stressed = false;
};

void warn_empty_bands(const NormalizedSurface& surface, const StressScenario& sc, std::ostream& err) {
  for (std::size_t i = 0; i < sc.bands.size() && i < surface.smiles.size(); ++i) {
    const auto& s = surface.smiles[i];
    for (const auto& b : sc.bands[i]) {
      bool hit = false;
      for (double k : s.strikes) hit = hit || (k >= b.k_lo && k <= b.k_hi);
      if (!hit) {
        err << "warning: band [" << format_number(b.k_lo) << ", " << format_number(b.k_hi) << "] at maturity "
            << i << " covers no quoted strike; ignored\n";
      }
    }
  }
}

Loaded load(Invocation& inv, std::ostream& err) {
  Loaded l;
  l.original = staged("load", [&] { return load_surface(inv.input); });
  l.surface = l.original;
  if (!inv.scenario.empty()) {
    const StressScenario sc = staged("scenario", [&] {
      return parse_scenario_json(read_file(inv.scenario), l.original.maturities());
    });
    warn_empty_bands(l.original, sc, err);
    if (!inv.marks_given && !sc.calibration_marks.empty()) {
      inv.config.calibration_marks = sc.calibration_marks;
      inv.marks_given = true;
    }
    l.surface = staged("stress", [&] { return apply_stress(l.original, sc); });
    l.stressed = true;
  }
  return l;
}

void write(const fs::path& dir, const std::string& name, const std::string& content) {
  staged("write", [&] {
    write_file(dir / name, content);
    return 0;
  });
}

void prepare_out(const Invocation& inv) {
  std::error_code ec;
  fs::create_directories(inv.out, ec);
  if (ec) throw StageError("write", Error(ErrorCode::io, "cannot create '" + inv.out + "': " + ec.message()));
}

void write_manifest(const Invocation& inv) { write(inv.out, "manifest.json", manifest_of(inv).dump(2) + '\n'); }

int cmd_check(Invocation& inv, std::ostream& out, std::ostream& err) {
  const Loaded l = load(inv, err);
  const ArbitrageReport report = staged("detect", [&] { return detect_arbitrage(l.surface); });
  prepare_out(inv);
  write(inv.out, "report.json", report_json(report, l.surface));
  write_manifest(inv);
  out << (report.feasible ? "arbitrage-free" : "arbitrage found") << ": " << report.violations.size()
      << " violation(s)\n";
  return report.feasible ? exit_ok : exit_arbitrage;
}

std::string vols_csv(const NormalizedSurface& before, const NormalizedSurface& after) {
  std::string s = "maturity_years,k,vol_before,vol_after\n";
  for (std::size_t i = 0; i < before.smiles.size(); ++i) {
    const auto& a = before.smiles[i];
    const auto& b = after.smiles[i];
    for (std::size_t j = 0; j < a.size(); ++j) {
      const auto va = vol_or_none(a.strikes[j], a.prices[j], a.maturity);
      const auto vb = vol_or_none(b.strikes[j], b.prices[j], b.maturity);
      s += format_number(a.maturity) + ',' + format_number(a.strikes[j]) + ',' + (va ? format_number(*va) : "") +
           ',' + (vb ? format_number(*vb) : "") + '\n';
    }
  }
  return s;
}

int cmd_stress(Invocation& inv, std::ostream& out, std::ostream& err) {
  if (inv.scenario.empty()) throw StageError("stress", Error(ErrorCode::parameter, "--scenario is required"));
  const Loaded l = load(inv, err);
  prepare_out(inv);
  write(inv.out, "surface_before.csv", surface_csv(l.original));
  write(inv.out, "surface_stressed.csv", surface_csv(l.surface));
  write(inv.out, "vols.csv", vols_csv(l.original, l.surface));
  write_manifest(inv);
  out << "stressed " << l.surface.nodes() << " node(s)\n";
  return exit_ok;
}

int cmd_repair(Invocation& inv, std::ostream& out, std::ostream& err) {
  const Loaded l = load(inv, err);
  const RepairResult r = staged("repair", [&] { return repair(l.surface, inv.config); });
  prepare_out(inv);
  write(inv.out, "surface_before.csv", surface_csv(l.original));
  if (l.stressed) write(inv.out, "surface_stressed.csv", surface_csv(l.surface));
  write(inv.out, "surface_after.csv", surface_csv(r.repaired, r.vols_after));
  write(inv.out, "marginals.csv", marginals_csv(r, l.surface));
  write(inv.out, "measure.csv", measure_csv(r.mu, r.theta, r.periods));
  write(inv.out, "history.csv", history_csv(r.sinkhorn.history));
  write(inv.out, "report.json", repair_report_json(r, inv.config, l.surface));
  write_manifest(inv);
  out << "repaired " << r.repaired.nodes() << " node(s) with " << to_string(inv.config.mode) << ", objective "
      << format_number(r.objective) << ", after-check " << (r.after.feasible ? "clean" : "NOT clean") << '\n';
  if (inv.config.mode == RepairMode::entropic && !r.sinkhorn.converged) {
    err << "warning: Sinkhorn stopped at max_iters with E = " << format_number(r.sinkhorn.criterion) << '\n';
  }
  return exit_ok;
}

int cmd_sweep(Invocation& inv, std::ostream& out, std::ostream& err) {
  if (inv.eps_list.empty()) throw StageError("sweep", Error(ErrorCode::parameter, "--eps needs at least one value"));
  const Loaded l = load(inv, err);
  const ProjectionProblem pb = staged("setup", [&] { return prepare_problem(l.surface, inv.config); });
  SweepOptions opts;
  opts.e_tol = inv.config.e_tol;
  opts.max_iters = inv.config.max_iters;
  const auto rows =
      staged("sweep", [&] { return epsilon_sweep(pb.distance, pb.nu, pb.system, inv.eps_list, opts); });
  std::optional<double> lp_value;
  const std::size_t n = static_cast<std::size_t>(pb.distance.rows());
  if (n * n + n <= LpOptions{}.max_variables) {
    lp_value = staged("lp", [&] { return solve_p_prime(pb.distance, pb.nu, pb.system).value; });
  } else {
    err << "warning: instance too large for the LP baseline; lp row omitted\n";
  }
  prepare_out(inv);
  write(inv.out, "sweep.csv", sweep_csv(rows, lp_value));
  write_manifest(inv);
  out << "swept " << rows.size() << " epsilon value(s)\n";
  return exit_ok;
}

int dispatch(Invocation& inv, std::ostream& out, std::ostream& err) {
  if (inv.command == "check") return cmd_check(inv, out, err);
  if (inv.command == "stress") return cmd_stress(inv, out, err);
  if (inv.command == "repair") return cmd_repair(inv, out, err);
  if (inv.command == "sweep") return cmd_sweep(inv, out, err);
  throw Error(ErrorCode::parameter, "unknown command '" + inv.command + "'");
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Static-arbitrage detection and repair for option price surfaces"};
  app.set_version_flag("--version", std::string(ARBPROJ_VERSION));
  app.require_subcommand(1);

  Invocation inv;
  Flags flags;
  std::string config_path;
  std::string manifest_path;

  auto add_common = [&](CLI::App* sub, bool repair_flags) {
    sub->add_option("input", inv.input, "surface or quote CSV")->required();
    sub->add_option("--out", inv.out, "output directory");
    sub->add_option("--scenario", inv.scenario, "stress scenario JSON");
    sub->add_option("--config", config_path, "JSON config; flags take precedence");
    if (!repair_flags) return;
    sub->add_option("--mode", flags.mode, "lp or entropic");
    sub->add_option("--epsilon", flags.epsilon, "entropic regularization");
    sub->add_option("--e-tol", flags.e_tol, "stopping tolerance on E");
    sub->add_option("--kmax-margin", flags.kmax_margin, "relative margin above the minimal k_max");
    sub->add_option("--shift", flags.shift, "positivity shift of the signed decomposition");
    sub->add_option("--max-iters", flags.max_iters, "Sinkhorn iteration cap");
    sub->add_option("--calibration", flags.calibration, "marked nodes, e.g. 0:3,1:2 (0-based)");
  };

  auto* check = app.add_subcommand("check", "detect static arbitrage; exit 2 when found");
  add_common(check, false);
  auto* stress = app.add_subcommand("stress", "apply a stress scenario");
  add_common(stress, false);
  auto* rep = app.add_subcommand("repair", "project onto arbitrage-free prices");
  add_common(rep, true);
  auto* sweep = app.add_subcommand("sweep", "entropic cost over a list of epsilons, plus the LP baseline");
  add_common(sweep, true);
  sweep->add_option("--eps", inv.eps_list, "comma-separated epsilon values, decreasing")->delimiter(',');
  auto* replay = app.add_subcommand("replay", "re-run the command recorded in a manifest.json");
  replay->add_option("manifest", manifest_path, "manifest.json written by an earlier run")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? exit_ok : exit_error;
  }

  try {
    if (replay->parsed()) {
      inv = staged("manifest", [&] { return invocation_from_manifest(manifest_path); });
    } else {
      for (auto* sub : {check, stress, rep, sweep}) {
        if (sub->parsed()) inv.command = sub->get_name();
      }
      if (!config_path.empty()) staged("config", [&] {
        apply_config_file(config_path, inv);
        return 0;
      });
      staged("config", [&] {
        apply_flags(flags, inv);
        return 0;
      });
    }
    return dispatch(inv, out, err);
  } catch (const StageError& e) {
    err << "error: " << e.what() << '\n';
  } catch (const Error& e) {
    err << "error: " << to_string(e.code()) << ": " << e.what() << '\n';
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
  }
  return exit_error;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"arbproj"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace arbproj::cli
