#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "specmargin/linalg.hpp"

namespace specmargin::cli {

/// Exit status contract.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitVerificationFailed = 2;

/// Runs one command line. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// p-th percentile (0 < p <= 100, linear interpolation) of the strictly positive
/// entries of `margins`; nullopt when none are positive.
std::optional<double> positive_margin_percentile(const Vector& margins, double p);

}  // namespace specmargin::cli
