#include "arbproj/error.hpp"

#include <cstdio>

namespace arbproj {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::parse: return "parse";
    case ErrorCode::empty_input: return "empty_input";
    case ErrorCode::insufficient_data: return "insufficient_data";
    case ErrorCode::degenerate_parity: return "degenerate_parity";
    case ErrorCode::invalid_price: return "invalid_price";
    case ErrorCode::out_of_band: return "out_of_band";
    case ErrorCode::invalid_kmax: return "invalid_kmax";
    case ErrorCode::degenerate_calibration: return "degenerate_calibration";
    case ErrorCode::invalid_calibration: return "invalid_calibration";
    case ErrorCode::index: return "index";
    case ErrorCode::invalid_shift: return "invalid_shift";
    case ErrorCode::rank: return "rank";
    case ErrorCode::singular: return "singular";
    case ErrorCode::duplicate_constraint: return "duplicate_constraint";
    case ErrorCode::size_limit: return "size_limit";
    case ErrorCode::kmax_too_small: return "kmax_too_small";
    case ErrorCode::parameter: return "parameter";
    case ErrorCode::instability: return "instability";
    case ErrorCode::stress: return "stress";
    case ErrorCode::io: return "io";
  }
  return "unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(message), code_(code) {}

ParseError::ParseError(std::size_t line, const std::string& message)
    : Error(ErrorCode::parse, "line " + std::to_string(line) + ": " + message),
      line_(line) {}

namespace {

std::string band_message(OutOfBandError::Bound bound, double bound_value, double price) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "price %.17g is not strictly %s the %s bound %.17g", price,
                bound == OutOfBandError::Bound::lower ? "above" : "below",
                bound == OutOfBandError::Bound::lower ? "intrinsic" : "forward", bound_value);
  return buf;
}

}  // namespace

OutOfBandError::OutOfBandError(Bound bound, double bound_value, double price)
    : Error(ErrorCode::out_of_band, band_message(bound, bound_value, price)),
      bound_(bound),
      bound_value_(bound_value),
      price_(price) {}

InstabilityError::InstabilityError(std::size_t row, const std::string& message)
    : Error(ErrorCode::instability, message), row_(row) {}

}  // namespace arbproj
