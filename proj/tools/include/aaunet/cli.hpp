#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace aaunet::cli {

/// Exit codes of every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Runs the `aaunet` command line. `args` excludes the program name.
/// Runtime failures print one "error: ..." line to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace aaunet::cli
