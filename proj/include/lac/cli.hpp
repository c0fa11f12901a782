#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lac::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Entry point behind the lac-void binary. `args` excludes the program name.
/// Subcommands: trace, sweep, report, compare.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lac::cli
