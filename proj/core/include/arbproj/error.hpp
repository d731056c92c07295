#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace arbproj {

enum class ErrorCode {
  parse,
  empty_input,
  insufficient_data,
  degenerate_parity,
  invalid_price,
  out_of_band,
  invalid_kmax,
  degenerate_calibration,
  invalid_calibration,
  index,
  invalid_shift,
  rank,
  singular,
  duplicate_constraint,
  size_limit,
  kmax_too_small,
  parameter,
  instability,
  stress,
  io,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Base exception for every failure raised by the library. The code is stable
/// and is what callers (and the CLI exit-code mapping) switch on.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& message);

  /// 1-based line number in the input, header included.
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// A normalized price outside the open band ((1-k)^+, 1).
class OutOfBandError : public Error {
 public:
  enum class Bound { lower, upper };

  OutOfBandError(Bound bound, double bound_value, double price);

  Bound bound() const noexcept { return bound_; }
  double bound_value() const noexcept { return bound_value_; }
  double price() const noexcept { return price_; }

 private:
  Bound bound_;
  double bound_value_;
  double price_;
};

/// Scalar root finding in a scaling substep ran out of exponent range.
class InstabilityError : public Error {
 public:
  InstabilityError(std::size_t row, const std::string& message);

  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

}  // namespace arbproj
