#include "arbproj/repair.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "arbproj/error.hpp"
#include "arbproj/lp.hpp"

namespace arbproj {

std::string_view to_string(RepairMode mode) noexcept {
  return mode == RepairMode::lp_exact ? "lp_exact" : "entropic";
}

RepairMode parse_mode(std::string_view text) {
  if (text == "lp" || text == "lp_exact") return RepairMode::lp_exact;
  if (text == "entropic") return RepairMode::entropic;
  throw Error(ErrorCode::parameter, "unknown mode '" + std::string(text) + "' (expected lp or entropic)");
}

void RepairConfig::validate() const {
  if (!(shift > 0.0)) throw Error(ErrorCode::invalid_shift, "positivity shift must be > 0");
  if (!(kmax_margin > 0.0)) throw Error(ErrorCode::parameter, "k_max margin must be > 0");
  if (mode == RepairMode::entropic) {
    if (!(epsilon > 0.0)) throw Error(ErrorCode::parameter, "epsilon must be > 0");
    if (!(e_tol > 0.0)) throw Error(ErrorCode::parameter, "e_tol must be > 0");
    if (max_iters == 0) throw Error(ErrorCode::parameter, "max_iters must be positive");
  }
}

std::vector<double> extract_marginal(const Eigen::VectorXd& mu, std::size_t l, std::size_t m, std::size_t i) {
  if (i >= m) throw Error(ErrorCode::index, "period " + std::to_string(i) + " outside the path space");
  const PathIndexer idx(l, m);
  if (static_cast<std::size_t>(mu.size()) != idx.paths()) throw Error(ErrorCode::parameter, "measure size is not l^m");
  std::vector<double> out(l, 0.0);
  for (std::size_t p = 0; p < idx.paths(); ++p) out[idx.atom(p, i)] += mu[static_cast<Eigen::Index>(p)];
  return out;
}

double price_from_marginal(std::span<const double> marginal, const Theta& theta, double k) {
  double s = 0.0;
  for (std::size_t a = 0; a < theta.size(); ++a) s += std::max(theta.strikes[a] - k, 0.0) * marginal[a];
  return s;
}

std::optional<double> vol_or_none(double k, double price, double maturity) {
  const double lower = std::max(1.0 - k, 0.0);
  if (!(price > lower + 1e-10) || !(price < 1.0 - 1e-10)) return std::nullopt;
  try {
    return implied_vol(k, price, maturity);
  } catch (const Error&) {
    return std::nullopt;
  }
}

Eigen::VectorXd polish_measure(const Eigen::VectorXd& mu_in, const ConstraintSystem& system) {
  Eigen::VectorXd mu = mu_in.cwiseMax(0.0);
  if (system.size() == 0) return mu;
  const Eigen::MatrixXd& A = system.A;
  double best = (A * mu - system.b).cwiseAbs().maxCoeff();
  Eigen::VectorXd best_mu = mu;
  for (int it = 0; it < 8 && best > 1e-15; ++it) {
    // mu <- mu (1 - A^T y) keeps the support and solves A mu = b to first order.
    const Eigen::VectorXd r = A * mu - system.b;
    const Eigen::MatrixXd K = A * mu.asDiagonal() * A.transpose();
    const Eigen::VectorXd y = K.completeOrthogonalDecomposition().solve(r);
    Eigen::VectorXd next = mu.cwiseProduct((Eigen::VectorXd::Ones(mu.size()) - A.transpose() * y));
    next = next.cwiseMax(0.0);
    const double res = (A * next - system.b).cwiseAbs().maxCoeff();
    if (!(res < best)) break;
    best = res;
    best_mu = next;
    mu = next;
  }
  return best_mu;
}

namespace {

NormalizedSurface marked_subsurface(const NormalizedSurface& surface, std::span<const NodeIndex> marks) {
  NormalizedSurface sub;
  for (std::size_t i = 0; i < surface.smiles.size(); ++i) {
    Smile s = surface.smiles[i];
    s.strikes.clear();
    s.prices.clear();
    std::vector<std::size_t> js;
    for (const auto& mk : marks) {
      if (mk.maturity == i) js.push_back(mk.strike);
    }
    std::sort(js.begin(), js.end());
    for (std::size_t j : js) {
      s.strikes.push_back(surface.smiles[i].strikes[j]);
      s.prices.push_back(surface.smiles[i].prices[j]);
    }
    if (!js.empty()) sub.smiles.push_back(std::move(s));
  }
  return sub;
}

std::vector<std::vector<std::optional<double>>> vols_of(const NormalizedSurface& surface) {
  std::vector<std::vector<std::optional<double>>> out;
  for (const auto& s : surface.smiles) {
    auto& row = out.emplace_back();
    for (std::size_t j = 0; j < s.size(); ++j) row.push_back(vol_or_none(s.strikes[j], s.prices[j], s.maturity));
  }
  return out;
}

}  // namespace

namespace {

// Where the last quoted slope of each smile reaches zero. Putting the (k_max, 0)
// anchor before that point would bend a clean smile into a butterfly.
double tail_kmax(const NormalizedSurface& surface, double margin) {
  double bound = 0.0;
  for (const auto& sm : surface.smiles) {
    const std::size_t n = sm.size();
    if (n == 0) continue;
    const double k0 = n > 1 ? sm.strikes[n - 2] : 0.0;
    const double c0 = n > 1 ? sm.prices[n - 2] : 1.0;
    const double slope = (sm.prices[n - 1] - c0) / (sm.strikes[n - 1] - k0);
    if (slope < 0.0) bound = std::max(bound, sm.strikes[n - 1] - sm.prices[n - 1] / slope);
  }
  return (1.0 + margin) * bound;
}

}  // namespace

ProjectionProblem prepare_problem(const NormalizedSurface& surface, const RepairConfig& config) {
  config.validate();
  surface.validate();
  ProjectionProblem pb;
  pb.calibration = calibration_points(surface, config.calibration_marks);
  if (!pb.calibration.empty()) {
    const auto sub = marked_subsurface(surface, config.calibration_marks);
    const auto sub_report = detect_arbitrage(sub);
    if (!sub_report.feasible) {
      throw Error(ErrorCode::invalid_calibration, "calibration marks select an arbitrageable sub-grid (" +
                                                      std::to_string(sub_report.violations.size()) + " violations)");
    }
  }

  pb.periods = surface.smiles.size();
  pb.kmax = std::max(choose_kmax(surface, pb.calibration, config.kmax_margin), tail_kmax(surface, config.kmax_margin));
  pb.theta = build_theta(surface, pb.kmax);
  pb.distance = distance_matrix(pb.theta, pb.periods);

  const auto marginals = signed_marginals(pb.theta, surface);
  const auto base = build_martingale_system(pb.theta, pb.periods);
  const auto joint = build_joint_system(base, marginals);
  pb.nu = decompose(build_joint(marginals, joint), config.shift);
  pb.system = build_calibrated_system(base, pb.calibration, pb.theta);
  return pb;
}

RepairResult repair(const NormalizedSurface& surface, const RepairConfig& config) {
  const ProjectionProblem pb = prepare_problem(surface, config);
  RepairResult out;
  out.before = detect_arbitrage(surface);
  out.vols_before = vols_of(surface);

  const std::size_t m = pb.periods;
  const auto& D = pb.distance;
  const auto& system = pb.system;
  out.periods = m;
  out.kmax = pb.kmax;
  out.theta = pb.theta;
  out.nu = pb.nu;

  if (config.mode == RepairMode::lp_exact) {
    auto sol = solve_p_prime(D, out.nu, system);
    out.coupling = std::move(sol.coupling);
    out.mu_raw = sol.mu;
    out.objective = sol.value;
    out.transport_cost = sol.value;
    out.lp_iterations = sol.lp.iterations;
  } else {
    const GibbsKernel kernel = gibbs_kernel(D, config.epsilon);
    SinkhornOptions opts;
    opts.e_tol = config.e_tol;
    opts.max_iters = config.max_iters;
    auto res = sinkhorn_run(kernel, system, out.nu, opts);
    if (const double lost = underflow_mass(kernel, res.coupling); lost > config.e_tol) {
      throw InstabilityError(system.size() + 1, "coupling puts mass " + std::to_string(lost) +
                                                    " on underflowed Gibbs kernel entries; use a larger epsilon");
    }
    out.coupling = std::move(res.coupling);
    out.mu_raw = out.coupling.rowwise().sum() - out.nu.nu_minus;
    out.objective = res.primal;
    out.duality_gap = res.duality_gap;
    out.transport_cost = out.coupling.cwiseProduct(D).sum();
    out.sinkhorn = std::move(res.report);
  }

  out.mu = polish_measure(out.mu_raw, system);
  out.polish_change = (out.mu - out.mu_raw).cwiseAbs().maxCoeff();

  out.repaired = surface;
  for (std::size_t i = 0; i < m; ++i) {
    out.marginals.push_back(extract_marginal(out.mu, out.theta.size(), m, i));
    auto& smile = out.repaired.smiles[i];
    for (std::size_t j = 0; j < smile.size(); ++j) {
      smile.prices[j] = price_from_marginal(out.marginals.back(), out.theta, smile.strikes[j]);
    }
  }
  out.vols_after = vols_of(out.repaired);
  out.after = detect_arbitrage(out.repaired);
  return out;
}

}  // namespace arbproj
