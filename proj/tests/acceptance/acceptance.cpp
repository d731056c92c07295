// Acceptance suite: one PASS/FAIL line per criterion, exit 1 if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "arbproj/entropic.hpp"
#include "arbproj/error.hpp"
#include "arbproj/io.hpp"
#include "arbproj/lp.hpp"
#include "arbproj/repair.hpp"
#include "cli.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace arbproj;

namespace {

const std::string kFix = ARBPROJ_FIXTURES_DIR;
const std::string kGolden = ARBPROJ_GOLDEN_DIR;

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

NormalizedSurface stressed(const std::string& surface, const std::string& scenario, StressScenario* sc_out = nullptr) {
  NormalizedSurface s = load_surface(kFix + "/" + surface);
  const auto sc = parse_scenario_json(read_file(kFix + "/" + scenario), s.maturities());
  if (sc_out) *sc_out = sc;
  return apply_stress(s, sc);
}

ProjectionProblem random_arbitrage_problem(std::mt19937_64& rng, std::size_t m, std::size_t strikes) {
  auto s = oracle::random_clean_surface(rng, m, strikes, strikes);
  oracle::inject_butterfly(rng, s);
  return prepare_problem(s, RepairConfig{});
}

// 1. Scaling iterates equal the full-matrix Dykstra iterates.
Outcome sinkhorn_equals_dykstra() {
  std::mt19937_64 rng(101);
  double worst = 0.0;
  std::size_t compared = 0;
  for (int t = 0; t < 20; ++t) {
    const std::size_t m = 1 + t % 2;
    const std::size_t strikes = m == 1 ? 2 + t % 3 : 2 + (t / 2) % 3;  // l = strikes + 2 <= 6
    const double eps = t % 4 < 2 ? 0.5 : 1.0;
    const auto pb = random_arbitrage_problem(rng, m, strikes);
    const auto kernel = gibbs_kernel(pb.distance, eps);
    SinkhornSolver solver(kernel, pb.system, pb.nu);
    const std::size_t R = solver.constraints();
    std::vector<Eigen::MatrixXd> ours;
    ours.reserve(50 * R);
    try {
      for (std::size_t k = 0; k < 50 * R; ++k) {
        solver.step();
        ours.push_back(solver.coupling());
      }
    } catch (const Error& e) {
      return {false, "instance " + std::to_string(t) + ": " + e.what()};
    }
    std::size_t idx = 0;
    dykstra_run(kernel, pb.system, pb.nu, 50,
                [&](std::size_t, std::size_t, const Eigen::MatrixXd& X, const std::vector<Eigen::MatrixXd>&) {
                  worst = std::max(worst, (X - ours[idx++]).cwiseAbs().maxCoeff());
                });
    compared += idx;
  }
  return {worst <= 1e-10, "max |M - X| = " + fmt(worst) + " over " + std::to_string(compared) + " substeps"};
}

// 2. A tiny stopping value means the iterate is feasible and stationary.
Outcome stopping_soundness() {
  std::mt19937_64 rng(202);
  std::size_t reached = 0;
  double worst_move = 0.0;
  double worst_violation = 0.0;
  for (int t = 0; t < 12; ++t) {
    const auto pb = random_arbitrage_problem(rng, 1 + t % 2, 2 + t % 2);
    const auto kernel = gibbs_kernel(pb.distance, 1.0);
    SinkhornSolver solver(kernel, pb.system, pb.nu);
    SinkhornOptions opts;
    opts.e_tol = 1e-12;
    opts.max_iters = 200000;
    opts.record_history = false;
    const auto rep = solver.run(opts);
    if (!rep.converged) continue;
    ++reached;

    // Feasibility of the reconstructed coupling, checked from scratch.
    const Eigen::MatrixXd M = solver.coupling();
    const Eigen::VectorXd mu = M.rowwise().sum() - pb.nu.nu_minus;
    double v = (pb.system.A * mu - pb.system.b).cwiseAbs().maxCoeff();
    v = std::max(v, (-mu).maxCoeff());
    v = std::max(v, (M.colwise().sum().transpose() - pb.nu.nu_plus).cwiseAbs().maxCoeff());
    v = std::max(v, -M.minCoeff());
    worst_violation = std::max(worst_violation, v);

    const Eigen::VectorXd a = solver.row_scaling();
    const Eigen::VectorXd b = solver.col_scaling();
    for (std::size_t k = 0; k < solver.constraints(); ++k) solver.step();
    const double da = ((solver.row_scaling() - a).array().abs() / a.array().abs()).maxCoeff();
    const double db = ((solver.col_scaling() - b).array().abs() / b.array().abs()).maxCoeff();
    worst_move = std::max({worst_move, da, db});
  }
  const bool pass = reached >= 6 && worst_move <= 1e-10 && worst_violation <= 1e-10;
  return {pass, std::to_string(reached) + "/12 reached E <= 1e-12; scaling change " + fmt(worst_move) +
                    ", constraint violation " + fmt(worst_violation)};
}

double golden(const std::string& key) {
  static const auto doc = nlohmann::json::parse(read_file(kGolden + "/lp_values.json"));
  return doc.at("values").at(key).at("value").get<double>();
}

// 3. Entropic cost approaches the LP optimum as epsilon shrinks.
Outcome epsilon_limit() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto s = stressed("desk_m1.csv", "atm_up20.json");
  const auto pb = prepare_problem(s, RepairConfig{});
  const double lp = solve_p_prime(pb.distance, pb.nu, pb.system).value;
  const std::vector<double> eps{1.0, 0.5, 0.2, 0.1, 0.05, 0.02, 0.01, 0.005, 0.002, 0.001};
  SweepOptions opts;
  opts.e_tol = 1e-9;
  const auto rows = epsilon_sweep(pb.distance, pb.nu, pb.system, eps, opts);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::size_t prefix = 0;
  while (prefix < rows.size() && rows[prefix].error.empty()) ++prefix;
  bool monotone = true;
  for (std::size_t i = 1; i < prefix; ++i)
    monotone = monotone && std::abs(rows[i].cost - lp) <= std::abs(rows[i - 1].cost - lp) + 1e-6;
  const SweepRow* best = nullptr;
  for (std::size_t i = 0; i < prefix; ++i)
    if (rows[i].converged) best = &rows[i];
  if (!best) return {false, "no epsilon converged"};
  const double rel = std::abs(best->cost - lp) / lp;
  const bool golden_ok = std::abs(lp - golden("desk_m1+atm_up20.json")) <= 1e-9 * (1.0 + lp);
  const bool pass = rel <= 0.01 && monotone && golden_ok && secs < 300.0;
  return {pass, "eps " + fmt(best->epsilon) + ": relative gap " + fmt(rel) + ", monotone " +
                    (monotone ? "yes" : "no") + " over " + std::to_string(prefix) + " stable values, LP golden " +
                    (golden_ok ? "ok" : "MISMATCH") + ", " + fmt(secs) + " s"};
}

// 4. Primal and dual values meet at converged entropic solves.
Outcome strong_duality() {
  std::vector<ProjectionProblem> problems;
  std::mt19937_64 rng(404);
  for (int t = 0; t < 8; ++t) problems.push_back(random_arbitrage_problem(rng, 1 + t % 2, 2 + t % 3));
  problems.push_back(prepare_problem(stressed("desk_m1.csv", "atm_up30.json"), RepairConfig{}));
  {
    StressScenario sc;
    const auto s = stressed("desk_m2.csv", "joint_down20.json", &sc);
    RepairConfig cfg;
    cfg.calibration_marks = sc.calibration_marks;
    problems.push_back(prepare_problem(s, cfg));
  }
  std::size_t converged = 0;
  double worst = 0.0;
  for (const auto& pb : problems) {
    for (double eps : {1.0, 0.5, 0.1}) {
      const auto kernel = gibbs_kernel(pb.distance, eps);
      SinkhornOptions opts;
      opts.e_tol = 1e-9;
      opts.record_history = false;
      const auto res = sinkhorn_run(kernel, pb.system, pb.nu, opts);
      if (!res.report.converged) continue;
      ++converged;
      worst = std::max(worst, std::abs(res.duality_gap) / (1.0 + std::abs(res.primal)));
    }
  }
  return {converged > 0 && worst <= 1e-6,
          std::to_string(converged) + " converged solves at E < 1e-9, max |gap|/(1+|primal|) = " + fmt(worst)};
}

// 5. Call prices are the expectations of the signed marginal.
Outcome call_price_identity() {
  std::mt19937_64 rng(505);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const auto sm = oracle::random_augmented_smile(rng, 1 + t % 8);
    const auto w = marginal_weights(sm.strikes, sm.prices);
    std::vector<double> ks = sm.strikes;
    for (std::size_t j = 0; j + 1 < sm.strikes.size(); ++j) ks.push_back(0.5 * (sm.strikes[j] + sm.strikes[j + 1]));
    for (double k : ks) {
      double lhs = 0.0;
      for (std::size_t a = 0; a < w.size(); ++a) lhs += std::max(sm.strikes[a] - k, 0.0) * w[a];
      // linear interpolation of the quoted prices, written out directly
      std::size_t j = 0;
      while (j + 1 < sm.strikes.size() && sm.strikes[j + 1] < k) ++j;
      double rhs;
      if (k >= sm.strikes.back()) {
        rhs = 0.0;
      } else {
        const double x = (k - sm.strikes[j]) / (sm.strikes[j + 1] - sm.strikes[j]);
        rhs = (1.0 - x) * sm.prices[j] + x * sm.prices[j + 1];
      }
      worst = std::max(worst, std::abs(lhs - rhs));
    }
  }
  return {worst <= 1e-12, "max deviation " + fmt(worst) + " over 100 smiles"};
}

// 6. The chosen k_max always leaves a feasible projection.
Outcome kmax_feasibility() {
  std::mt19937_64 rng(606);
  std::size_t ok = 0;
  std::size_t ok_calib = 0;
  std::size_t calib_tried = 0;
  std::string first_failure;
  for (int t = 0; t < 50; ++t) {
    const std::size_t m = 1 + t % 3;
    auto s = oracle::random_clean_surface(rng, m, 2, m == 3 ? 2 : 4);
    const NodeIndex bad = oracle::inject_butterfly(rng, s);
    try {
      const auto pb = prepare_problem(s, RepairConfig{});
      solve_p_prime(pb.distance, pb.nu, pb.system);
      ++ok;
    } catch (const Error& e) {
      if (first_failure.empty()) first_failure = e.what();
    }
    // two marks away from the injected node; redraw until there are some
    RepairConfig cfg;
    NormalizedSurface sc = s;
    NodeIndex bad_c = bad;
    for (;;) {
      for (std::size_t i = 0; i < sc.maturities() && cfg.calibration_marks.size() < 2; ++i)
        for (std::size_t j = 0; j < sc.smiles[i].size() && cfg.calibration_marks.size() < 2; ++j)
          if (!(i == bad_c.maturity && j + 1 >= bad_c.strike && j <= bad_c.strike + 1))
            cfg.calibration_marks.push_back({i, j});
      if (!cfg.calibration_marks.empty()) break;
      sc = oracle::random_clean_surface(rng, m, 2, m == 3 ? 2 : 4);
      bad_c = oracle::inject_butterfly(rng, sc);
    }
    ++calib_tried;
    try {
      const auto pb = prepare_problem(sc, cfg);
      if (oracle::martingale_feasible(pb.system)) {
        solve_p_prime(pb.distance, pb.nu, pb.system);
        ++ok_calib;
      }
    } catch (const Error& e) {
      if (first_failure.empty()) first_failure = e.what();
    }
  }
  const bool pass = ok == 50 && ok_calib == 50 && calib_tried == 50;
  std::string detail = std::to_string(ok) + "/50 unconstrained, " + std::to_string(ok_calib) + "/" +
                       std::to_string(calib_tried) + " calibrated";
  if (!first_failure.empty()) detail += "; first failure: " + first_failure;
  return {pass, detail};
}

// 7. The scenario analogues repair to clean surfaces that keep their marks.
Outcome repair_contract() {
  struct Case {
    const char* surface;
    const char* scenario;
    const char* marks;  // override; empty means the scenario's own
    double epsilon;
  };
  const std::vector<Case> cases{
      {"desk_m1.csv", "atm_up20.json", "", 1.0},
      {"desk_m1.csv", "atm_up20_marked.json", "", 1.0},
      {"desk_m1.csv", "steepen20.json", "", 1.0},
      {"desk_m2.csv", "joint_down20.json", "", 1.5e-2},
      {"desk_m2.csv", "calendar_flatten.json", "", 1.5e-2},
  };
  std::size_t runs = 0;
  std::vector<std::string> problems;
  for (const auto& c : cases) {
    StressScenario sc;
    const auto s = stressed(c.surface, c.scenario, &sc);
    for (const auto mode : {RepairMode::lp_exact, RepairMode::entropic}) {
      RepairConfig cfg;
      cfg.mode = mode;
      cfg.epsilon = c.epsilon;
      cfg.e_tol = 5e-6;
      cfg.calibration_marks = sc.calibration_marks;
      const std::string tag = std::string(c.scenario) + "/" + std::string(to_string(mode));
      ++runs;
      RepairResult r;
      try {
        r = repair(s, cfg);
      } catch (const Error& e) {
        problems.push_back(tag + ": " + e.what());
        continue;
      }
      if (r.before.feasible) problems.push_back(tag + ": stress produced no arbitrage");
      if (!r.after.feasible) problems.push_back(tag + ": repaired surface fails detection");
      for (const auto& mk : cfg.calibration_marks) {
        const double d = std::abs(r.repaired.smiles[mk.maturity].prices[mk.strike] -
                                  s.smiles[mk.maturity].prices[mk.strike]);
        if (d > std::max(cfg.e_tol, 1e-8)) problems.push_back(tag + ": mark missed by " + fmt(d));
      }
      if (mode == RepairMode::lp_exact) {
        const double g = golden(std::string(c.surface).substr(0, 7) + "+" + c.scenario);
        if (std::abs(r.objective - g) > 1e-9 * (1.0 + std::abs(g)))
          problems.push_back(tag + ": LP value " + fmt(r.objective) + " vs golden " + fmt(g));
      }
    }
  }
  {
    const auto r = repair(load_surface(kFix + "/tiny_m1.csv"), RepairConfig{});
    const double g = golden("tiny_m1");
    ++runs;
    if (std::abs(r.objective - g) > 1e-10 * (1.0 + g) || !r.after.feasible)
      problems.push_back("tiny_m1: LP value " + fmt(r.objective) + " vs golden " + fmt(g));
  }
  std::string detail = std::to_string(runs) + " repairs";
  if (problems.empty()) return {true, detail + ", all clean, marks kept, LP values match goldens"};
  for (const auto& p : problems) detail += "; " + p;
  return {false, detail};
}

// 8. Entropy of the two explicit couplings.
Outcome entropy_constants() {
  Eigen::MatrixXd pi1(2, 1);
  pi1 << 0.5, 0.5;
  Eigen::MatrixXd pi2(1, 3);
  pi2 << 1.0 / 3, 1.0 / 3, 1.0 / 3;
  const double e1 = std::abs(entropy(pi1) - (1.0 + std::log(2.0)));
  const double e2 = std::abs(entropy(pi2) - (1.0 + std::log(3.0)));
  return {e1 <= 1e-12 && e2 <= 1e-12, "errors " + fmt(e1) + ", " + fmt(e2)};
}

// 9. The simplex agrees with brute-force vertex enumeration.
Outcome lp_vs_vertices() {
  std::mt19937_64 rng(909);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> pos(0.0, 1.0);
  double worst = 0.0;
  std::size_t instances = 0;
  while (instances < 9) {
    const Eigen::Index n = 6 + static_cast<Eigen::Index>(instances % 7);  // 6..12 variables
    const Eigen::Index rows = 2 + static_cast<Eigen::Index>(instances % 3);
    LpProblem lp;
    lp.eq_matrix = Eigen::MatrixXd::NullaryExpr(rows, n, [&] { return u(rng); });
    lp.eq_matrix.row(0).setOnes();  // bounded feasible region
    Eigen::VectorXd x0 = Eigen::VectorXd::NullaryExpr(n, [&] { return pos(rng); });
    lp.eq_rhs = lp.eq_matrix * x0;
    lp.objective = Eigen::VectorXd::NullaryExpr(n, [&] { return u(rng); });
    lp.lower = Eigen::VectorXd::Zero(n);
    const auto sol = solve_lp(lp);
    const double ref = oracle::vertex_enumeration(lp.eq_matrix, lp.eq_rhs, lp.objective);
    if (sol.status != LpStatus::optimal) return {false, "instance " + std::to_string(instances) + " not optimal"};
    worst = std::max(worst, std::abs(sol.objective_value - ref));
    ++instances;
  }
  // tenth: the exact projection of the tiny fixture, 12 variables
  const auto pb = prepare_problem(load_surface(kFix + "/tiny_m1.csv"), RepairConfig{});
  const auto sf = oracle::p_prime_standard_form(pb.distance, pb.nu, pb.system);
  if (sf.A.cols() > 12) return {false, "tiny fixture has " + std::to_string(sf.A.cols()) + " variables"};
  worst = std::max(worst, std::abs(solve_p_prime(pb.distance, pb.nu, pb.system).value -
                                   oracle::vertex_enumeration(sf.A, sf.b, sf.c)));
  ++instances;
  return {worst <= 1e-10, std::to_string(instances) + " programs, max difference " + fmt(worst)};
}

// 10. Same manifest, same bytes.
Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "arbproj_acceptance_determinism";
  fs::remove_all(root);
  struct Cmd {
    std::string name;
    std::vector<std::string> args;
  };
  const std::vector<Cmd> cmds{
      {"check", {"check", kFix + "/desk_m2.csv", "--scenario", kFix + "/calendar_flatten.json"}},
      {"stress", {"stress", kFix + "/desk_m1.csv", "--scenario", kFix + "/steepen20.json"}},
      {"lp", {"repair", kFix + "/desk_m1.csv", "--scenario", kFix + "/atm_up20_marked.json"}},
      {"entropic",
       {"repair", kFix + "/desk_m2.csv", "--scenario", kFix + "/joint_down20.json", "--mode", "entropic", "--epsilon",
        "0.5", "--e-tol", "1e-6"}},
      {"sweep", {"sweep", kFix + "/desk_m1.csv", "--scenario", kFix + "/atm_up30.json", "--eps", "1,0.3,0.1"}},
      {"quotes", {"repair", kFix + "/quotes.csv", "--mode", "entropic"}},
  };
  auto snapshot = [](const fs::path& dir) {
    std::vector<std::pair<std::string, std::string>> files;
    for (const auto& e : fs::directory_iterator(dir)) files.emplace_back(e.path().filename().string(), read_file(e.path()));
    std::sort(files.begin(), files.end());
    return files;
  };
  std::size_t compared = 0;
  std::vector<std::string> diffs;
  for (const auto& c : cmds) {
    const fs::path dir = root / c.name;
    auto args = c.args;
    args.push_back("--out");
    args.push_back(dir.string());
    std::ostringstream out, err;
    const int code1 = cli::run(args, out, err);
    if (code1 == cli::exit_error) {
      diffs.push_back(c.name + ": " + err.str());
      continue;
    }
    const auto first = snapshot(dir);
    const int code2 = cli::run(args, out, err);
    const auto second = snapshot(dir);
    const int code3 = cli::run(std::vector<std::string>{"replay", (dir / "manifest.json").string()}, out, err);
    const auto third = snapshot(dir);
    if (code1 != code2 || code1 != code3) diffs.push_back(c.name + ": exit codes differ");
    if (first != second) diffs.push_back(c.name + ": rerun differs");
    if (first != third) diffs.push_back(c.name + ": replay differs");
    compared += first.size();
  }
  fs::remove_all(root);
  std::string detail = std::to_string(cmds.size()) + " commands, " + std::to_string(compared) + " files identical";
  if (diffs.empty()) return {true, detail};
  detail = "";
  for (const auto& d : diffs) detail += d + "; ";
  return {false, detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"Sinkhorn iterates equal Dykstra iterates", sinkhorn_equals_dykstra},
      {"stopping criterion soundness", stopping_soundness},
      {"entropic cost converges to the LP optimum", epsilon_limit},
      {"strong duality at converged solves", strong_duality},
      {"call prices from signed marginals", call_price_identity},
      {"feasibility after the k_max choice", kmax_feasibility},
      {"repair contract on stress scenarios", repair_contract},
      {"entropy constants", entropy_constants},
      {"simplex against vertex enumeration", lp_vs_vertices},
      {"determinism of CLI outputs", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << (i + 1) << ". " << criteria[i].first << " (" << o.detail
              << ") [" << fmt(secs) << " s]" << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
