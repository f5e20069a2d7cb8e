#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace em3::cli {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitIo = 2;
inline constexpr int kExitCompat = 3;

// Runs one em3 command line. Results go to `out`, diagnostics to `err`.
// Stats follow a "---" line as key=value pairs.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Bench summary: the first run is discarded, the rest averaged.
double mean_after_warmup(std::span<const double> runs);

}  // namespace em3::cli
