#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace ran {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Entry point of the `ran` tool. args[0] is the program name.
/// Subcommands: gen-data, train, eval, ablate, gradcheck, heatmaps.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ran
