#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace arbproj {

/// One row of the raw quote file, in currency units.
struct OptionQuote {
  double maturity_years = 0.0;
  double strike = 0.0;
  double call_mid = 0.0;
  std::optional<double> put_mid;
  double volume = 0.0;
};

struct CurvePoint {
  double maturity = 0.0;
  double forward = 1.0;
  double discount = 1.0;
};

/// Forwards and discount factors, one point per quoted maturity.
struct MarketCurve {
  std::vector<CurvePoint> points;

  /// Throws Error(parameter) when no point matches the maturity.
  const CurvePoint& at(double maturity) const;
};

struct ParityFit {
  double forward = 0.0;
  double discount = 0.0;
  /// Root-mean-square residual of the call-minus-put regression, currency units.
  double residual = 0.0;
  std::size_t points = 0;
};

/// Forward-normalized quotes for a single maturity: k = K/F, c = C/(F D).
struct Smile {
  double maturity = 0.0;
  double forward = 1.0;
  double discount = 1.0;
  std::vector<double> strikes;
  std::vector<double> prices;

  std::size_t size() const noexcept { return strikes.size(); }
};

struct NormalizedSurface {
  std::vector<Smile> smiles;

  std::size_t maturities() const noexcept { return smiles.size(); }
  std::size_t nodes() const noexcept;
  /// Throws Error(invalid_price) / Error(parameter) when an invariant is broken:
  /// increasing maturities, strictly increasing positive strikes, positive prices.
  void validate() const;
};

/// Index of a quoted node; both indices are 0-based.
struct NodeIndex {
  std::size_t maturity = 0;
  std::size_t strike = 0;

  friend bool operator==(const NodeIndex&, const NodeIndex&) = default;
  friend auto operator<=>(const NodeIndex&, const NodeIndex&) = default;
};

struct StressBand {
  double k_lo = 0.0;
  double k_hi = 0.0;
  double vol_multiplier = 1.0;
};

struct StressScenario {
  /// bands[i] applies to maturity i; maturities past the end are left untouched.
  std::vector<std::vector<StressBand>> bands;
  std::vector<NodeIndex> calibration_marks;

  /// Throws Error(parameter) on overlapping bands or nonpositive multipliers.
  void validate() const;
};

bool same_maturity(double a, double b) noexcept;

/// Parses the `maturity_years,strike,call_mid,put_mid,volume` CSV layout.
/// Rows with zero volume are dropped.
std::vector<OptionQuote> parse_quotes(std::string_view content);

/// Ordinary least squares of C - P = a + bK at one maturity, D = -b, F = a/D.
ParityFit fit_forward_discount(std::span<const OptionQuote> quotes, double maturity);

/// Runs fit_forward_discount for every distinct maturity in the quotes.
MarketCurve fit_curve(std::span<const OptionQuote> quotes);

NormalizedSurface normalize(std::span<const OptionQuote> quotes, const MarketCurve& curve);

/// Inverse of normalize: strike = kF, call = cFD, put from parity, unit volume.
std::vector<OptionQuote> denormalize(const NormalizedSurface& surface);
MarketCurve curve_of(const NormalizedSurface& surface);

/// Undiscounted Black-Scholes call on a unit forward.
double bs_call_price(double k, double vol, double maturity);

/// Out-of-the-money part of the normalized call, bs_call_price - (1-k)^+,
/// evaluated without cancellation against the intrinsic value.
double bs_time_value(double k, double vol, double maturity);

/// d(price)/d(vol) for the normalized call.
double bs_vega(double k, double vol, double maturity);

/// Implied volatility of a normalized call price. Throws OutOfBandError when
/// c is not strictly inside ((1-k)^+, 1).
double implied_vol(double k, double price, double maturity);

NormalizedSurface apply_stress(const NormalizedSurface& surface, const StressScenario& scenario);

}  // namespace arbproj
