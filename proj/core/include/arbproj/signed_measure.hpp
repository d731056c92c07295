#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "arbproj/grid.hpp"
#include "arbproj/market_data.hpp"

namespace arbproj {

struct ConstraintSystem;

/// Signed measure on Theta built from one augmented smile. Weights are zero
/// off the smile's own strikes.
struct SignedMarginal {
  std::vector<double> weights;

  double mass() const noexcept;
  double mean(const Theta& theta) const noexcept;
  bool is_probability() const noexcept;
};

/// Joint signed measure on Theta^m and its strictly positive decomposition.
struct JointSignedMeasure {
  Eigen::VectorXd nu;
  Eigen::VectorXd nu_plus;
  Eigen::VectorXd nu_minus;
  double alpha = 0.0;  ///< total mass of nu_plus
  double shift = 0.0;
};

/// Augmented nodes of one smile: (0, 1), the quotes, then (k_max, 0).
struct AugmentedSmile {
  std::vector<double> strikes;
  std::vector<double> prices;
};

AugmentedSmile augment(const Smile& smile, double k_max);

/// Weights at the augmented nodes, second differences of the price curve.
/// Throws Error(parameter) when strikes are not strictly increasing.
std::vector<double> marginal_weights(std::span<const double> strikes, std::span<const double> prices);

/// Places the augmented-node weights on Theta.
SignedMarginal marginal_on_theta(const Theta& theta, const Smile& smile);
std::vector<SignedMarginal> signed_marginals(const Theta& theta, const NormalizedSurface& surface);

/// Piecewise-linear interpolation of the augmented nodes, zero from k_max on.
double pricing_function(std::span<const double> strikes, std::span<const double> prices, double k);

/// |sum_x (x - k)^+ nu(x) - pi(k)| for a marginal built from the same nodes.
double call_price_residual(const SignedMarginal& marginal, const Theta& theta, std::span<const double> strikes,
                           std::span<const double> prices, double k);

/// Dense nu_1 x ... x nu_m on Theta^m, flat-indexed as PathIndexer.
Eigen::VectorXd product_measure(std::span<const SignedMarginal> marginals);

/// Closest signed martingale to the product of the marginals under the
/// joint system (A_nu, b_nu).
Eigen::VectorXd build_joint(std::span<const SignedMarginal> marginals, const ConstraintSystem& joint);

JointSignedMeasure decompose(const Eigen::VectorXd& nu, double shift = 1e-3);

}  // namespace arbproj
