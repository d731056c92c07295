#include "arbproj/market_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "arbproj/error.hpp"

namespace arbproj {

namespace {

constexpr double kMaturityTol = 1e-12;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
}

double parse_number(std::string_view field, std::size_t line, const char* name) {
  double value = 0.0;
  const auto* first = field.data();
  const auto* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (field.empty() || ec != std::errc() || ptr != last || !std::isfinite(value)) {
    throw ParseError(line, std::string("malformed ") + name + " '" + std::string(field) + "'");
  }
  return value;
}

constexpr double kInvSqrt2 = std::numbers::sqrt2 / 2.0;

double norm_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

double norm_pdf(double x) { return std::exp(-0.5 * x * x) * std::numbers::inv_sqrtpi * kInvSqrt2; }

void check_bs_args(double k, double vol, double maturity) {
  if (!(k > 0.0) || !(vol > 0.0) || !(maturity > 0.0)) {
    throw Error(ErrorCode::parameter, "Black-Scholes arguments must be positive");
  }
}

}  // namespace

bool same_maturity(double a, double b) noexcept {
  return std::abs(a - b) <= kMaturityTol * std::max(1.0, std::abs(a));
}

const CurvePoint& MarketCurve::at(double maturity) const {
  for (const auto& p : points) {
    if (same_maturity(p.maturity, maturity)) return p;
  }
  throw Error(ErrorCode::parameter, "market curve has no point at maturity " + std::to_string(maturity));
}

std::size_t NormalizedSurface::nodes() const noexcept {
  std::size_t n = 0;
  for (const auto& s : smiles) n += s.size();
  return n;
}

void NormalizedSurface::validate() const {
  for (std::size_t i = 0; i < smiles.size(); ++i) {
    const auto& s = smiles[i];
    if (!(s.maturity > 0.0)) throw Error(ErrorCode::parameter, "maturity must be positive");
    if (i > 0 && !(s.maturity > smiles[i - 1].maturity)) {
      throw Error(ErrorCode::parameter, "maturities must be strictly increasing");
    }
    if (s.strikes.size() != s.prices.size()) {
      throw Error(ErrorCode::parameter, "strike and price vectors differ in length");
    }
    if (s.strikes.empty()) throw Error(ErrorCode::parameter, "smile without quotes");
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (!(s.strikes[j] > 0.0)) throw Error(ErrorCode::parameter, "strikes must be positive");
      if (j > 0 && !(s.strikes[j] > s.strikes[j - 1])) {
        throw Error(ErrorCode::parameter, "strikes must be strictly increasing");
      }
      if (!(s.prices[j] > 0.0) || !std::isfinite(s.prices[j])) {
        throw Error(ErrorCode::invalid_price, "normalized prices must be positive");
      }
    }
  }
}

void StressScenario::validate() const {
  for (const auto& per_maturity : bands) {
    for (std::size_t a = 0; a < per_maturity.size(); ++a) {
      const auto& band = per_maturity[a];
      if (!(band.vol_multiplier > 0.0)) throw Error(ErrorCode::parameter, "vol multiplier must be positive");
      if (!(band.k_lo <= band.k_hi)) throw Error(ErrorCode::parameter, "band bounds are reversed");
      for (std::size_t b = 0; b < a; ++b) {
        const auto& other = per_maturity[b];
        if (band.k_lo <= other.k_hi && other.k_lo <= band.k_hi) {
          throw Error(ErrorCode::parameter, "stress bands overlap within a maturity");
        }
      }
    }
  }
}

std::vector<OptionQuote> parse_quotes(std::string_view content) {
  std::vector<OptionQuote> quotes;
  std::size_t line_no = 0;
  bool header_seen = false;
  bool any_row = false;
  std::size_t start = 0;
  while (start <= content.size()) {
    auto end = content.find('\n', start);
    if (end == std::string_view::npos) end = content.size();
    const auto line = trim(content.substr(start, end - start));
    start = end + 1;
    ++line_no;
    if (line.empty()) {
      if (end == content.size()) break;
      continue;
    }
    if (!header_seen) {
      auto cols = split_commas(line);
      const std::vector<std::string_view> expected{"maturity_years", "strike", "call_mid", "put_mid", "volume"};
      if (cols != expected) throw ParseError(line_no, "expected header maturity_years,strike,call_mid,put_mid,volume");
      header_seen = true;
      continue;
    }
    any_row = true;
    const auto cols = split_commas(line);
    if (cols.size() != 5) throw ParseError(line_no, "expected 5 fields, got " + std::to_string(cols.size()));
    OptionQuote q;
    q.maturity_years = parse_number(cols[0], line_no, "maturity_years");
    q.strike = parse_number(cols[1], line_no, "strike");
    q.call_mid = parse_number(cols[2], line_no, "call_mid");
    if (!cols[3].empty()) q.put_mid = parse_number(cols[3], line_no, "put_mid");
    q.volume = parse_number(cols[4], line_no, "volume");
    if (!(q.maturity_years > 0.0)) throw ParseError(line_no, "maturity must be positive");
    if (!(q.strike > 0.0)) throw ParseError(line_no, "strike must be positive");
    if (q.call_mid < 0.0) throw ParseError(line_no, "call_mid must be nonnegative");
    if (q.put_mid && *q.put_mid < 0.0) throw ParseError(line_no, "put_mid must be nonnegative");
    if (q.volume < 0.0) throw ParseError(line_no, "volume must be nonnegative");
    if (q.volume == 0.0) continue;
    quotes.push_back(q);
    if (end == content.size()) break;
  }
  if (!any_row) throw Error(ErrorCode::empty_input, "quote file has no data rows");
  return quotes;
}

ParityFit fit_forward_discount(std::span<const OptionQuote> quotes, double maturity) {
  std::vector<double> xs;
  std::vector<double> ys;
  for (const auto& q : quotes) {
    if (!same_maturity(q.maturity_years, maturity) || !q.put_mid) continue;
    xs.push_back(q.strike);
    ys.push_back(q.call_mid - *q.put_mid);
  }
  std::vector<double> distinct = xs;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < 2) {
    throw Error(ErrorCode::insufficient_data,
                "call-put parity needs two distinct strikes with both legs at maturity " + std::to_string(maturity));
  }
  const auto n = static_cast<double>(xs.size());
  double x_mean = 0.0;
  double y_mean = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    x_mean += xs[i];
    y_mean += ys[i];
  }
  x_mean /= n;
  y_mean /= n;
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - x_mean) * (xs[i] - x_mean);
    sxy += (xs[i] - x_mean) * (ys[i] - y_mean);
  }
  const double slope = sxy / sxx;
  const double intercept = y_mean - slope * x_mean;
  const double discount = -slope;
  // Identical C - P across strikes leaves rounding noise in the slope.
  if (!(discount > 1e-10)) {
    throw Error(ErrorCode::degenerate_parity, "call-put parity slope is not negative");
  }
  const double forward = intercept / discount;
  if (!(forward > 0.0) || discount > 1.05) {
    throw Error(ErrorCode::degenerate_parity, "call-put parity fit outside the admissible band");
  }
  double ss = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double r = ys[i] - (intercept + slope * xs[i]);
    ss += r * r;
  }
  return ParityFit{forward, discount, std::sqrt(ss / n), xs.size()};
}

MarketCurve fit_curve(std::span<const OptionQuote> quotes) {
  std::vector<double> maturities;
  for (const auto& q : quotes) {
    const bool known = std::any_of(maturities.begin(), maturities.end(),
                                   [&](double t) { return same_maturity(t, q.maturity_years); });
    if (!known) maturities.push_back(q.maturity_years);
  }
  std::sort(maturities.begin(), maturities.end());
  MarketCurve curve;
  for (double t : maturities) {
    const auto fit = fit_forward_discount(quotes, t);
    curve.points.push_back({t, fit.forward, fit.discount});
  }
  return curve;
}

NormalizedSurface normalize(std::span<const OptionQuote> quotes, const MarketCurve& curve) {
  std::vector<const OptionQuote*> sorted;
  sorted.reserve(quotes.size());
  for (const auto& q : quotes) sorted.push_back(&q);
  std::stable_sort(sorted.begin(), sorted.end(), [](const OptionQuote* a, const OptionQuote* b) {
    if (!same_maturity(a->maturity_years, b->maturity_years)) return a->maturity_years < b->maturity_years;
    return a->strike < b->strike;
  });

  NormalizedSurface surface;
  std::size_t i = 0;
  while (i < sorted.size()) {
    const double maturity = sorted[i]->maturity_years;
    const auto& point = curve.at(maturity);
    Smile smile;
    smile.maturity = point.maturity;
    smile.forward = point.forward;
    smile.discount = point.discount;
    while (i < sorted.size() && same_maturity(sorted[i]->maturity_years, maturity)) {
      const double strike = sorted[i]->strike;
      double sum = 0.0;
      std::size_t count = 0;
      while (i < sorted.size() && same_maturity(sorted[i]->maturity_years, maturity) &&
             sorted[i]->strike == strike) {
        sum += sorted[i]->call_mid;
        ++count;
        ++i;
      }
      const double mid = sum / static_cast<double>(count);
      const double c = mid / (point.forward * point.discount);
      if (!(c > 0.0)) {
        throw Error(ErrorCode::invalid_price, "nonpositive normalized price at T=" + std::to_string(maturity) +
                                                  " K=" + std::to_string(strike));
      }
      smile.strikes.push_back(strike / point.forward);
      smile.prices.push_back(c);
    }
    surface.smiles.push_back(std::move(smile));
  }
  return surface;
}

std::vector<OptionQuote> denormalize(const NormalizedSurface& surface) {
  std::vector<OptionQuote> quotes;
  for (const auto& s : surface.smiles) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      OptionQuote q;
      q.maturity_years = s.maturity;
      q.strike = s.strikes[j] * s.forward;
      q.call_mid = s.prices[j] * s.forward * s.discount;
      q.put_mid = q.call_mid - s.discount * (s.forward - q.strike);
      q.volume = 1.0;
      quotes.push_back(q);
    }
  }
  return quotes;
}

MarketCurve curve_of(const NormalizedSurface& surface) {
  MarketCurve curve;
  for (const auto& s : surface.smiles) curve.points.push_back({s.maturity, s.forward, s.discount});
  return curve;
}

double bs_time_value(double k, double vol, double maturity) {
  check_bs_args(k, vol, maturity);
  const double s = vol * std::sqrt(maturity);
  const double d1 = -std::log(k) / s + 0.5 * s;
  const double d2 = d1 - s;
  if (k >= 1.0) return std::max(0.0, norm_cdf(d1) - k * norm_cdf(d2));
  // In the money: the out-of-the-money put carries the time value.
  return std::max(0.0, k * norm_cdf(-d2) - norm_cdf(-d1));
}

double bs_call_price(double k, double vol, double maturity) {
  return std::max(1.0 - k, 0.0) + bs_time_value(k, vol, maturity);
}

double bs_vega(double k, double vol, double maturity) {
  check_bs_args(k, vol, maturity);
  const double sqrt_t = std::sqrt(maturity);
  const double s = vol * sqrt_t;
  const double d1 = -std::log(k) / s + 0.5 * s;
  return norm_pdf(d1) * sqrt_t;
}

double implied_vol(double k, double price, double maturity) {
  if (!(k > 0.0) || !(maturity > 0.0)) throw Error(ErrorCode::parameter, "implied_vol needs k > 0 and T > 0");
  const double intrinsic = std::max(1.0 - k, 0.0);
  if (!(price > intrinsic)) throw OutOfBandError(OutOfBandError::Bound::lower, intrinsic, price);
  if (!(price < 1.0)) throw OutOfBandError(OutOfBandError::Bound::upper, 1.0, price);

  // Newton on log time value, safeguarded by a bisection bracket. The log form
  // keeps deep out-of-the-money prices well conditioned.
  const double target = price - intrinsic;
  const double log_target = std::log(target);
  auto residual = [&](double vol) { return std::log(bs_time_value(k, vol, maturity)) - log_target; };

  double lo = 1e-6;
  double hi = 5.0;
  while (residual(hi) < 0.0 && hi < 1e4) hi *= 2.0;
  while (residual(lo) > 0.0 && lo > 1e-16) lo *= 0.1;

  double vol = std::sqrt(2.0 * std::numbers::pi / maturity) * price;
  if (!(vol > lo && vol < hi)) vol = 0.5 * (lo + hi);
  for (int iter = 0; iter < 300; ++iter) {
    const double tv = bs_time_value(k, vol, maturity);
    const double f = std::log(tv) - log_target;
    if (f == 0.0) break;
    if (f > 0.0) {
      hi = vol;
    } else {
      lo = vol;
    }
    const double slope = bs_vega(k, vol, maturity) / tv;
    double next = vol - f / slope;
    if (!std::isfinite(next) || next <= lo || next >= hi) next = 0.5 * (lo + hi);
    const double step = std::abs(next - vol);
    vol = next;
    if (step <= 1e-15 * vol || hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * hi) break;
  }
  return vol;
}

NormalizedSurface apply_stress(const NormalizedSurface& surface, const StressScenario& scenario) {
  scenario.validate();
  NormalizedSurface out = surface;
  for (std::size_t i = 0; i < out.smiles.size() && i < scenario.bands.size(); ++i) {
    auto& smile = out.smiles[i];
    for (std::size_t j = 0; j < smile.size(); ++j) {
      const double k = smile.strikes[j];
      const auto band = std::find_if(scenario.bands[i].begin(), scenario.bands[i].end(),
                                     [&](const StressBand& b) { return k >= b.k_lo && k <= b.k_hi; });
      if (band == scenario.bands[i].end() || band->vol_multiplier == 1.0) continue;
      try {
        const double vol = implied_vol(k, smile.prices[j], smile.maturity);
        smile.prices[j] = bs_call_price(k, vol * band->vol_multiplier, smile.maturity);
      } catch (const Error& e) {
        throw Error(ErrorCode::stress, "stress at maturity index " + std::to_string(i) + ", strike index " +
                                           std::to_string(j) + " (k=" + std::to_string(k) + "): " + e.what());
      }
    }
  }
  return out;
}

}  // namespace arbproj
