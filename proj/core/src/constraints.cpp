#include "arbproj/constraints.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <utility>

#include "arbproj/error.hpp"
#include "arbproj/lp.hpp"

namespace arbproj {

std::string_view to_string(RowKind kind) noexcept {
  switch (kind) {
    case RowKind::mass: return "mass";
    case RowKind::centering: return "centering";
    case RowKind::martingality: return "martingality";
    case RowKind::calibration: return "calibration";
    case RowKind::marginal: return "marginal";
  }
  return "unknown";
}

std::string_view to_string(ViolationKind kind) noexcept {
  switch (kind) {
    case ViolationKind::monotonicity: return "monotonicity";
    case ViolationKind::convexity: return "convexity";
    case ViolationKind::calendar: return "calendar";
    case ViolationKind::bounds: return "bounds";
    case ViolationKind::lp_infeasible: return "lp_infeasible";
  }
  return "unknown";
}

double ConstraintSystem::residual(const Eigen::VectorXd& x) const {
  if (rows.empty()) return 0.0;
  return (A * x - b).cwiseAbs().maxCoeff();
}

ConstraintSystem build_martingale_system(const Theta& theta, std::size_t m) {
  const PathIndexer idx(theta.size(), m);
  const std::size_t n = idx.paths();
  std::size_t rows = 2;
  for (std::size_t i = 0; i + 1 < m; ++i) rows += n / idx.stride(i);

  ConstraintSystem sys;
  sys.atoms = theta.size();
  sys.periods = m;
  sys.A = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(n));
  sys.b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(rows));
  sys.rows.reserve(rows);

  sys.A.row(0).setOnes();
  sys.b[0] = 1.0;
  sys.rows.push_back({RowKind::mass, 0, 0});
  for (std::size_t p = 0; p < n; ++p) sys.A(1, static_cast<Eigen::Index>(p)) = theta.strikes[idx.atom(p, 0)];
  sys.b[1] = 1.0;
  sys.rows.push_back({RowKind::centering, 0, 0});

  Eigen::Index r = 2;
  for (std::size_t i = 0; i + 1 < m; ++i) {
    const std::size_t prefixes = n / idx.stride(i);
    for (std::size_t code = 0; code < prefixes; ++code) {
      const std::size_t first = code * idx.stride(i);
      for (std::size_t p = first; p < first + idx.stride(i); ++p) {
        sys.A(r, static_cast<Eigen::Index>(p)) = theta.strikes[idx.atom(p, i + 1)] - theta.strikes[idx.atom(p, i)];
      }
      sys.rows.push_back({RowKind::martingality, i, code});
      ++r;
    }
  }
  return sys;
}

ConstraintSystem build_calibrated_system(const ConstraintSystem& base, std::span<const CalibrationPoint> calibration,
                                         const Theta& theta) {
  if (calibration.empty()) return base;
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto& c : calibration) {
    if (!seen.emplace(c.period, c.strike_index).second) {
      throw Error(ErrorCode::duplicate_constraint, "calibration node (" + std::to_string(c.period) + ", " +
                                                       std::to_string(c.strike_index) + ") given twice");
    }
    if (!(c.price >= 0.0)) throw Error(ErrorCode::invalid_calibration, "calibration prices must be nonnegative");
    if (c.period >= base.periods) throw Error(ErrorCode::index, "calibration period outside the system");
  }

  const PathIndexer idx(base.atoms, base.periods);
  const auto old_rows = static_cast<Eigen::Index>(base.size());
  const auto extra = static_cast<Eigen::Index>(calibration.size());
  ConstraintSystem sys = base;
  sys.A.conservativeResize(old_rows + extra, Eigen::NoChange);
  sys.b.conservativeResize(old_rows + extra);
  for (Eigen::Index c = 0; c < extra; ++c) {
    const auto& pt = calibration[static_cast<std::size_t>(c)];
    for (std::size_t p = 0; p < idx.paths(); ++p) {
      sys.A(old_rows + c, static_cast<Eigen::Index>(p)) =
          std::max(theta.strikes[idx.atom(p, pt.period)] - pt.strike, 0.0);
    }
    sys.b[old_rows + c] = pt.price;
    sys.rows.push_back({RowKind::calibration, pt.period, pt.strike_index});
  }
  return sys;
}

ConstraintSystem build_joint_system(const ConstraintSystem& base, std::span<const SignedMarginal> marginals) {
  if (marginals.size() != base.periods) {
    throw Error(ErrorCode::parameter, "one marginal per period is required");
  }
  const PathIndexer idx(base.atoms, base.periods);
  const auto n = static_cast<Eigen::Index>(idx.paths());

  std::vector<Eigen::Index> mart;
  for (std::size_t r = 0; r < base.size(); ++r) {
    if (base.rows[r].kind == RowKind::martingality) mart.push_back(static_cast<Eigen::Index>(r));
  }
  const auto raw = static_cast<Eigen::Index>(mart.size() + base.periods * base.atoms);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(raw, n);
  Eigen::VectorXd b(raw);
  std::vector<RowTag> tags;
  tags.reserve(static_cast<std::size_t>(raw));
  Eigen::Index r = 0;
  for (Eigen::Index src : mart) {
    A.row(r) = base.A.row(src);
    b[r] = base.b[src];
    tags.push_back(base.rows[static_cast<std::size_t>(src)]);
    ++r;
  }
  for (std::size_t i = 0; i < base.periods; ++i) {
    if (marginals[i].weights.size() != base.atoms) {
      throw Error(ErrorCode::parameter, "marginal length differs from the grid size");
    }
    for (std::size_t a = 0; a < base.atoms; ++a) {
      for (std::size_t p = 0; p < idx.paths(); ++p) {
        if (idx.atom(p, i) == a) A(r, static_cast<Eigen::Index>(p)) = 1.0;
      }
      b[r] = marginals[i].weights[a];
      tags.push_back({RowKind::marginal, i, a});
      ++r;
    }
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A.transpose());
  qr.setThreshold(1e-10);
  const Eigen::Index rank = qr.rank();
  std::vector<Eigen::Index> keep(static_cast<std::size_t>(rank));
  for (Eigen::Index k = 0; k < rank; ++k) keep[static_cast<std::size_t>(k)] = qr.colsPermutation().indices()[k];
  std::sort(keep.begin(), keep.end());

  ConstraintSystem sys;
  sys.atoms = base.atoms;
  sys.periods = base.periods;
  sys.A.resize(rank, n);
  sys.b.resize(rank);
  for (Eigen::Index k = 0; k < rank; ++k) {
    const Eigen::Index src = keep[static_cast<std::size_t>(k)];
    sys.A.row(k) = A.row(src);
    sys.b[k] = b[src];
    sys.rows.push_back(tags[static_cast<std::size_t>(src)]);
  }
  return sys;
}

namespace {

void stage_one(const NormalizedSurface& surface, double tol, std::vector<Violation>& out) {
  for (std::size_t i = 0; i < surface.smiles.size(); ++i) {
    const auto& s = surface.smiles[i];
    for (std::size_t j = 0; j < s.size(); ++j) {
      const double k = s.strikes[j];
      const double c = s.prices[j];
      const double lower = std::max(1.0 - k, 0.0);
      if (c < lower - tol) out.push_back({ViolationKind::bounds, {i, j}, 0, k, lower - c});
      if (c > 1.0 + tol) out.push_back({ViolationKind::bounds, {i, j}, 0, k, c - 1.0});

      const double k0 = j == 0 ? 0.0 : s.strikes[j - 1];
      const double c0 = j == 0 ? 1.0 : s.prices[j - 1];
      const double rise = c - c0;
      if (rise > tol) out.push_back({ViolationKind::monotonicity, {i, j}, 0, k, rise});
      const double drop = c0 - c - (k - k0);
      if (drop > tol) out.push_back({ViolationKind::monotonicity, {i, j}, 0, k, drop});

      if (j + 1 < s.size()) {
        const double k2 = s.strikes[j + 1];
        const double t = (k - k0) / (k2 - k0);
        const double chord = c0 + t * (s.prices[j + 1] - c0);
        if (c - chord > tol) out.push_back({ViolationKind::convexity, {i, j}, 0, k, c - chord});
      }
    }
  }

  // An earlier price may not exceed any later smile's chord through (0, 1),
  // held flat past its last node.
  for (std::size_t i = 0; i < surface.smiles.size(); ++i) {
    for (std::size_t i2 = i + 1; i2 < surface.smiles.size(); ++i2) {
      const auto& later = surface.smiles[i2];
      if (later.size() == 0) continue;
      std::vector<double> ks{0.0};
      std::vector<double> cs{1.0};
      ks.insert(ks.end(), later.strikes.begin(), later.strikes.end());
      cs.insert(cs.end(), later.prices.begin(), later.prices.end());
      const auto& s = surface.smiles[i];
      for (std::size_t j = 0; j < s.size(); ++j) {
        const double k = s.strikes[j];
        const double upper = k >= ks.back() ? cs.back() : pricing_function(ks, cs, k);
        const double excess = s.prices[j] - upper;
        if (excess > tol) out.push_back({ViolationKind::calendar, {i, j}, i2, k, excess});
      }
    }
  }
}

}  // namespace

ArbitrageReport detect_arbitrage(const NormalizedSurface& surface, const DetectOptions& options) {
  ArbitrageReport report;
  stage_one(surface, options.tolerance, report.violations);

  if (options.run_lp && surface.nodes() > 0) {
    std::vector<NodeIndex> all;
    for (std::size_t i = 0; i < surface.smiles.size(); ++i) {
      for (std::size_t j = 0; j < surface.smiles[i].size(); ++j) all.push_back({i, j});
    }
    const auto marks = calibration_points(surface, all);
    double kmax = 0.0;
    try {
      kmax = choose_kmax(surface, marks);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::degenerate_calibration) throw;
      kmax = choose_kmax(surface);
    }
    report.kmax = kmax;
    const Theta theta = build_theta(surface, kmax);
    const std::size_t m = surface.smiles.size();
    double n = 1.0;
    for (std::size_t i = 0; i < m; ++i) n *= static_cast<double>(theta.size());
    if (n <= static_cast<double>(options.max_lp_variables)) {
      const auto sys = build_calibrated_system(build_martingale_system(theta, m), marks, theta);
      LpProblem lp;
      lp.objective = Eigen::VectorXd::Zero(sys.A.cols());
      lp.eq_matrix = sys.A;
      lp.eq_rhs = sys.b;
      lp.lower = Eigen::VectorXd::Zero(sys.A.cols());
      LpOptions opts;
      opts.max_variables = options.max_lp_variables;
      opts.feasibility_tol = options.tolerance;
      const auto sol = solve_lp(lp, opts);
      report.stage2_run = true;
      if (sol.status == LpStatus::infeasible) {
        report.violations.push_back({ViolationKind::lp_infeasible, {0, 0}, 0, 0.0, sol.infeasibility});
      }
    }
  }
  report.feasible = report.violations.empty();
  return report;
}

}  // namespace arbproj
