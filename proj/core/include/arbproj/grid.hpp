#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "arbproj/market_data.hpp"

namespace arbproj {

/// Common strike set: 0 = k_1 < ... < k_l = k_max.
struct Theta {
  std::vector<double> strikes;

  std::size_t size() const noexcept { return strikes.size(); }
  double k_max() const noexcept { return strikes.back(); }
  /// 0-based position of a strike already in the set (relative tolerance 1e-12).
  std::size_t index_of(double k) const;
};

/// A calibration constraint: the normalized price of a quoted node that the
/// projected measure must reproduce.
struct CalibrationPoint {
  std::size_t period = 0;        ///< 0-based maturity index
  std::size_t strike_index = 0;  ///< 0-based index into that smile
  double strike = 0.0;
  double price = 0.0;
};

std::vector<CalibrationPoint> calibration_points(const NormalizedSurface& surface,
                                                 std::span<const NodeIndex> marks);

Theta build_theta(const NormalizedSurface& surface, double k_max);

/// Picks k_max large enough for the (calibrated) martingale set to be non-empty,
/// scaled by (1 + margin).
double choose_kmax(const NormalizedSurface& surface, std::span<const CalibrationPoint> calibration = {},
                   double margin = 0.1);

/// Bijection between flat path indices and per-period atom indices on Theta^m.
/// The public encode/decode use 1-based indices; the flat accessors are 0-based.
class PathIndexer {
 public:
  PathIndexer(std::size_t l, std::size_t m);

  std::size_t atoms() const noexcept { return l_; }
  std::size_t periods() const noexcept { return m_; }
  std::size_t paths() const noexcept { return n_; }

  std::size_t encode(std::span<const std::size_t> tuple) const;
  std::vector<std::size_t> decode(std::size_t p) const;

  /// 0-based atom visited at 0-based period i by 0-based flat path p.
  std::size_t atom(std::size_t p, std::size_t i) const noexcept { return (p / stride_[i]) % l_; }
  std::size_t stride(std::size_t i) const noexcept { return stride_[i]; }

  /// Path x_p = (k_{p_1}, ..., k_{p_m}) for a 0-based flat index.
  std::vector<double> path(const Theta& theta, std::size_t p) const;

 private:
  std::size_t l_;
  std::size_t m_;
  std::size_t n_;
  std::vector<std::size_t> stride_;
};

/// Euclidean distances between all pairs of paths, N x N.
Eigen::MatrixXd distance_matrix(const Theta& theta, std::size_t m);

}  // namespace arbproj
