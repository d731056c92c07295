#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "arbproj/grid.hpp"
#include "arbproj/market_data.hpp"
#include "arbproj/signed_measure.hpp"

namespace arbproj {

enum class RowKind { mass, centering, martingality, calibration, marginal };

std::string_view to_string(RowKind kind) noexcept;

/// What a constraint row encodes. period is 0-based. For martingality rows
/// index is the 0-based flat code of the prefix (p_1..p_{period+1}); for
/// calibration rows it is the strike index in the smile; for marginal rows it
/// is the atom in Theta.
struct RowTag {
  RowKind kind = RowKind::mass;
  std::size_t period = 0;
  std::size_t index = 0;
};

/// Dense A x = b over measures on Theta^m.
struct ConstraintSystem {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  std::vector<RowTag> rows;
  std::size_t atoms = 0;
  std::size_t periods = 0;

  std::size_t size() const noexcept { return rows.size(); }
  std::size_t paths() const noexcept { return static_cast<std::size_t>(A.cols()); }
  /// max |A x - b|.
  double residual(const Eigen::VectorXd& x) const;
};

ConstraintSystem build_martingale_system(const Theta& theta, std::size_t m);

/// Appends one row per calibration point. Throws Error(duplicate_constraint)
/// on repeated (period, strike) pairs and Error(invalid_calibration) on
/// nonpositive prices.
ConstraintSystem build_calibrated_system(const ConstraintSystem& base, std::span<const CalibrationPoint> calibration,
                                         const Theta& theta);

/// Martingality rows of base plus marginal-fixing rows, reduced to full row rank.
ConstraintSystem build_joint_system(const ConstraintSystem& base, std::span<const SignedMarginal> marginals);

enum class ViolationKind { monotonicity, convexity, calendar, bounds, lp_infeasible };

std::string_view to_string(ViolationKind kind) noexcept;

struct Violation {
  ViolationKind kind = ViolationKind::bounds;
  NodeIndex node;           ///< offending node; for calendar the earlier maturity's node
  std::size_t other = 0;    ///< later maturity index for calendar violations
  double strike = 0.0;      ///< normalized strike of node
  double magnitude = 0.0;   ///< size of the breach in normalized price units
};

struct ArbitrageReport {
  bool feasible = true;
  bool stage2_run = false;  ///< false when the LP was skipped (too large)
  double kmax = 0.0;        ///< k_max used by the LP stage
  std::vector<Violation> violations;
};

struct DetectOptions {
  double tolerance = 1e-8;
  bool run_lp = true;
  std::size_t max_lp_variables = 5000;
};

ArbitrageReport detect_arbitrage(const NormalizedSurface& surface, const DetectOptions& options = {});

}  // namespace arbproj
