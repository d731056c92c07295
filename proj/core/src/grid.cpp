#include "arbproj/grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "arbproj/error.hpp"

namespace arbproj {

namespace {

constexpr double kDedupTol = 1e-12;

bool near(double a, double b) { return std::abs(a - b) <= kDedupTol * std::max(std::abs(a), std::abs(b)); }

double max_quoted_strike(const NormalizedSurface& surface) {
  double k = 0.0;
  for (const auto& s : surface.smiles) {
    if (!s.strikes.empty()) k = std::max(k, s.strikes.back());
  }
  return k;
}

}  // namespace

std::size_t Theta::index_of(double k) const {
  const auto it = std::lower_bound(strikes.begin(), strikes.end(), k);
  const auto idx = static_cast<std::size_t>(it - strikes.begin());
  if (idx < strikes.size() && (strikes[idx] == k || near(strikes[idx], k))) return idx;
  if (idx > 0 && near(strikes[idx - 1], k)) return idx - 1;
  throw Error(ErrorCode::index, "strike " + std::to_string(k) + " is not in the grid");
}

std::vector<CalibrationPoint> calibration_points(const NormalizedSurface& surface,
                                                 std::span<const NodeIndex> marks) {
  std::vector<CalibrationPoint> out;
  out.reserve(marks.size());
  for (const auto& mark : marks) {
    if (mark.maturity >= surface.smiles.size() || mark.strike >= surface.smiles[mark.maturity].size()) {
      throw Error(ErrorCode::index, "calibration mark (" + std::to_string(mark.maturity) + ", " +
                                        std::to_string(mark.strike) + ") is outside the surface");
    }
    const auto& smile = surface.smiles[mark.maturity];
    out.push_back({mark.maturity, mark.strike, smile.strikes[mark.strike], smile.prices[mark.strike]});
  }
  return out;
}

Theta build_theta(const NormalizedSurface& surface, double k_max) {
  std::vector<double> all;
  for (const auto& s : surface.smiles) all.insert(all.end(), s.strikes.begin(), s.strikes.end());
  std::sort(all.begin(), all.end());
  if (!all.empty() && !(k_max > all.back())) {
    throw Error(ErrorCode::invalid_kmax, "k_max " + std::to_string(k_max) + " must exceed the largest strike " +
                                             std::to_string(all.back()));
  }
  Theta theta;
  theta.strikes.push_back(0.0);
  for (double k : all) {
    if (!near(k, theta.strikes.back())) theta.strikes.push_back(k);
  }
  theta.strikes.push_back(k_max);
  return theta;
}

double choose_kmax(const NormalizedSurface& surface, std::span<const CalibrationPoint> calibration, double margin) {
  if (!(margin > 0.0)) throw Error(ErrorCode::parameter, "k_max margin must be positive");
  const double max_strike = max_quoted_strike(surface);
  if (calibration.empty()) return (1.0 + margin) * std::max(1.0, max_strike);

  // Sub-grid points plus the common (0, 1) anchor.
  std::vector<std::pair<double, double>> points;
  points.emplace_back(0.0, 1.0);
  for (const auto& c : calibration) points.emplace_back(c.strike, c.price);

  double slope = -std::numeric_limits<double>::infinity();
  for (const auto& [k1, c1] : points) {
    for (const auto& [k2, c2] : points) {
      if (!(k1 > k2)) continue;
      const double q = (c1 - c2) / (k1 - k2);
      if (q < 0.0) slope = std::max(slope, q);
    }
  }
  if (!std::isfinite(slope)) {
    throw Error(ErrorCode::degenerate_calibration, "calibration prices admit no negative difference quotient");
  }

  double bound = max_strike;
  for (std::size_t i = 0; i < surface.smiles.size(); ++i) {
    const CalibrationPoint* last = nullptr;
    for (const auto& c : calibration) {
      if (c.period == i && (last == nullptr || c.strike > last->strike)) last = &c;
    }
    if (last != nullptr) bound = std::max(bound, last->strike - (2.0 / slope) * last->price);
  }
  return (1.0 + margin) * bound;
}

PathIndexer::PathIndexer(std::size_t l, std::size_t m) : l_(l), m_(m), n_(1), stride_(m) {
  if (l == 0 || m == 0) throw Error(ErrorCode::parameter, "path indexer needs l >= 1 and m >= 1");
  for (std::size_t i = m; i-- > 0;) {
    stride_[i] = n_;
    if (n_ > std::numeric_limits<std::size_t>::max() / l) throw Error(ErrorCode::size_limit, "l^m overflows");
    n_ *= l;
  }
}

std::size_t PathIndexer::encode(std::span<const std::size_t> tuple) const {
  if (tuple.size() != m_) throw Error(ErrorCode::index, "tuple length differs from the number of periods");
  std::size_t p = 0;
  for (std::size_t i = 0; i < m_; ++i) {
    if (tuple[i] < 1 || tuple[i] > l_) {
      throw Error(ErrorCode::index, "tuple component " + std::to_string(tuple[i]) + " outside [1, " +
                                        std::to_string(l_) + "]");
    }
    p += (tuple[i] - 1) * stride_[i];
  }
  return p + 1;
}

std::vector<std::size_t> PathIndexer::decode(std::size_t p) const {
  if (p < 1 || p > n_) {
    throw Error(ErrorCode::index, "path index " + std::to_string(p) + " outside [1, " + std::to_string(n_) + "]");
  }
  std::vector<std::size_t> tuple(m_);
  for (std::size_t i = 0; i < m_; ++i) tuple[i] = atom(p - 1, i) + 1;
  return tuple;
}

std::vector<double> PathIndexer::path(const Theta& theta, std::size_t p) const {
  std::vector<double> x(m_);
  for (std::size_t i = 0; i < m_; ++i) x[i] = theta.strikes[atom(p, i)];
  return x;
}

Eigen::MatrixXd distance_matrix(const Theta& theta, std::size_t m) {
  const PathIndexer idx(theta.size(), m);
  const auto n = static_cast<Eigen::Index>(idx.paths());
  Eigen::MatrixXd coords(static_cast<Eigen::Index>(m), n);
  for (Eigen::Index p = 0; p < n; ++p) {
    for (std::size_t i = 0; i < m; ++i) {
      coords(static_cast<Eigen::Index>(i), p) = theta.strikes[idx.atom(static_cast<std::size_t>(p), i)];
    }
  }
  Eigen::MatrixXd d(n, n);
  for (Eigen::Index q = 0; q < n; ++q) {
    d(q, q) = 0.0;
    for (Eigen::Index p = q + 1; p < n; ++p) {
      const double v = (coords.col(p) - coords.col(q)).norm();
      d(p, q) = v;
      d(q, p) = v;
    }
  }
  return d;
}

}  // namespace arbproj
