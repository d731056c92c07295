#include "arbproj/signed_measure.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "arbproj/constraints.hpp"
#include "arbproj/error.hpp"
#include "arbproj/lp.hpp"

namespace arbproj {

double SignedMarginal::mass() const noexcept {
  double s = 0.0;
  for (double w : weights) s += w;
  return s;
}

double SignedMarginal::mean(const Theta& theta) const noexcept {
  double s = 0.0;
  for (std::size_t a = 0; a < weights.size() && a < theta.size(); ++a) s += theta.strikes[a] * weights[a];
  return s;
}

bool SignedMarginal::is_probability() const noexcept {
  return std::all_of(weights.begin(), weights.end(), [](double w) { return w >= -1e-12; });
}

AugmentedSmile augment(const Smile& smile, double k_max) {
  AugmentedSmile out;
  out.strikes.reserve(smile.size() + 2);
  out.prices.reserve(smile.size() + 2);
  out.strikes.push_back(0.0);
  out.prices.push_back(1.0);
  out.strikes.insert(out.strikes.end(), smile.strikes.begin(), smile.strikes.end());
  out.prices.insert(out.prices.end(), smile.prices.begin(), smile.prices.end());
  out.strikes.push_back(k_max);
  out.prices.push_back(0.0);
  return out;
}

std::vector<double> marginal_weights(std::span<const double> strikes, std::span<const double> prices) {
  if (strikes.size() != prices.size() || strikes.size() < 2) {
    throw Error(ErrorCode::parameter, "augmented smile needs matching strikes and prices, at least two nodes");
  }
  const std::size_t n = strikes.size();
  std::vector<double> slope(n - 1);
  for (std::size_t j = 0; j + 1 < n; ++j) {
    const double dk = strikes[j + 1] - strikes[j];
    if (!(dk > 0.0)) {
      throw Error(ErrorCode::parameter, "strikes must be strictly increasing (duplicate at " +
                                            std::to_string(strikes[j]) + ")");
    }
    slope[j] = (prices[j + 1] - prices[j]) / dk;
  }
  std::vector<double> w(n);
  w[0] = 1.0 + slope[0];
  for (std::size_t j = 1; j + 1 < n; ++j) w[j] = slope[j] - slope[j - 1];
  w[n - 1] = -slope[n - 2];
  return w;
}

SignedMarginal marginal_on_theta(const Theta& theta, const Smile& smile) {
  const auto aug = augment(smile, theta.k_max());
  const auto w = marginal_weights(aug.strikes, aug.prices);
  SignedMarginal m;
  m.weights.assign(theta.size(), 0.0);
  m.weights.front() += w.front();
  for (std::size_t j = 1; j + 1 < w.size(); ++j) m.weights[theta.index_of(aug.strikes[j])] += w[j];
  m.weights.back() += w.back();
  return m;
}

std::vector<SignedMarginal> signed_marginals(const Theta& theta, const NormalizedSurface& surface) {
  std::vector<SignedMarginal> out;
  out.reserve(surface.smiles.size());
  for (const auto& s : surface.smiles) out.push_back(marginal_on_theta(theta, s));
  return out;
}

double pricing_function(std::span<const double> strikes, std::span<const double> prices, double k) {
  if (strikes.empty() || k >= strikes.back()) return 0.0;
  if (k <= strikes.front()) return prices.front();
  const auto it = std::upper_bound(strikes.begin(), strikes.end(), k);
  const auto j = static_cast<std::size_t>(it - strikes.begin()) - 1;
  const double t = (k - strikes[j]) / (strikes[j + 1] - strikes[j]);
  return prices[j] + t * (prices[j + 1] - prices[j]);
}

double call_price_residual(const SignedMarginal& marginal, const Theta& theta, std::span<const double> strikes,
                           std::span<const double> prices, double k) {
  double lhs = 0.0;
  for (std::size_t a = 0; a < theta.size(); ++a) lhs += std::max(theta.strikes[a] - k, 0.0) * marginal.weights[a];
  return std::abs(lhs - pricing_function(strikes, prices, k));
}

Eigen::VectorXd product_measure(std::span<const SignedMarginal> marginals) {
  if (marginals.empty()) throw Error(ErrorCode::parameter, "product of zero marginals");
  const std::size_t l = marginals.front().weights.size();
  const PathIndexer idx(l, marginals.size());
  Eigen::VectorXd out(static_cast<Eigen::Index>(idx.paths()));
  for (std::size_t p = 0; p < idx.paths(); ++p) {
    double v = 1.0;
    for (std::size_t i = 0; i < marginals.size(); ++i) v *= marginals[i].weights[idx.atom(p, i)];
    out[static_cast<Eigen::Index>(p)] = v;
  }
  return out;
}

Eigen::VectorXd build_joint(std::span<const SignedMarginal> marginals, const ConstraintSystem& joint) {
  const Eigen::VectorXd target = product_measure(marginals);
  if (joint.A.cols() != target.size()) {
    throw Error(ErrorCode::parameter, "joint system width differs from the path count");
  }
  return solve_eq_lsq(joint.A, joint.b, target);
}

JointSignedMeasure decompose(const Eigen::VectorXd& nu, double shift) {
  if (!(shift > 0.0)) throw Error(ErrorCode::invalid_shift, "positivity shift must be > 0");
  JointSignedMeasure out;
  out.nu = nu;
  out.shift = shift;
  out.nu_plus = nu.cwiseMax(0.0).array() + shift;
  out.nu_minus = (-nu).cwiseMax(0.0).array() + shift;
  out.alpha = out.nu_plus.sum();
  return out;
}

}  // namespace arbproj
