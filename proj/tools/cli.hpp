#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace arbproj::cli {

inline constexpr int exit_ok = 0;
inline constexpr int exit_error = 1;
inline constexpr int exit_arbitrage = 2;

/// Entry point of the `arbproj` tool. Never throws; failures become exit 1.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Convenience overload; args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace arbproj::cli
