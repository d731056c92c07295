#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "arbproj/constraints.hpp"
#include "arbproj/entropic.hpp"
#include "arbproj/grid.hpp"
#include "arbproj/market_data.hpp"
#include "arbproj/signed_measure.hpp"

namespace arbproj {

enum class RepairMode { lp_exact, entropic };

std::string_view to_string(RepairMode mode) noexcept;
/// Accepts "lp", "lp_exact" and "entropic".
RepairMode parse_mode(std::string_view text);

struct RepairConfig {
  RepairMode mode = RepairMode::lp_exact;
  double epsilon = 1.0;
  double e_tol = 1e-4;
  double kmax_margin = 0.1;
  double shift = 1e-3;
  std::size_t max_iters = 100000;
  std::vector<NodeIndex> calibration_marks;

  /// Throws Error(parameter) / Error(invalid_shift) on bad values.
  void validate() const;
};

struct RepairResult {
  double kmax = 0.0;
  Theta theta;
  std::size_t periods = 0;

  JointSignedMeasure nu;
  Eigen::VectorXd mu_raw;  ///< solver output M 1 - nu^-
  Eigen::VectorXd mu;      ///< mu_raw projected onto A mu = b exactly, mu >= 0
  double polish_change = 0.0;  ///< max |mu - mu_raw|

  Eigen::MatrixXd coupling;
  double transport_cost = 0.0;  ///< <M, D>
  double objective = 0.0;       ///< W1 value (lp) or epsilon KL(M|G) (entropic)
  double duality_gap = 0.0;     ///< entropic only
  SinkhornReport sinkhorn;      ///< entropic only
  std::size_t lp_iterations = 0;

  std::vector<std::vector<double>> marginals;  ///< per period, on theta
  NormalizedSurface repaired;
  std::vector<std::vector<std::optional<double>>> vols_before;
  std::vector<std::vector<std::optional<double>>> vols_after;
  ArbitrageReport before;
  ArbitrageReport after;
};

/// Everything the projection needs, built from a surface and a config.
struct ProjectionProblem {
  std::vector<CalibrationPoint> calibration;
  double kmax = 0.0;
  Theta theta;
  std::size_t periods = 0;
  Eigen::MatrixXd distance;
  JointSignedMeasure nu;
  ConstraintSystem system;  ///< martingale rows plus calibration rows
};

/// Checks the calibration sub-grid, chooses k_max (never below the point where
/// a smile's last quoted slope reaches zero) and builds nu and the
/// constraint system. Throws Error(invalid_calibration) when the marked nodes
/// are themselves arbitrageable.
ProjectionProblem prepare_problem(const NormalizedSurface& surface, const RepairConfig& config);

/// Marginal of a measure on Theta^m at 0-based period i.
std::vector<double> extract_marginal(const Eigen::VectorXd& mu, std::size_t l, std::size_t m, std::size_t i);

/// sum_x (x - k)^+ marginal(x).
double price_from_marginal(std::span<const double> marginal, const Theta& theta, double k);

/// Implied vol, or nullopt when the price is within 1e-10 of a no-arbitrage bound.
std::optional<double> vol_or_none(double k, double price, double maturity);

/// Nonnegative measure closest to mu (multiplicative corrections) with A mu = b.
Eigen::VectorXd polish_measure(const Eigen::VectorXd& mu, const ConstraintSystem& system);

RepairResult repair(const NormalizedSurface& surface, const RepairConfig& config);

}  // namespace arbproj
