#pragma once

#include <string>
#include <vector>

namespace gridtopo {

/// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitWarning = 1;  // unrooted tree, unresolved phases
inline constexpr int kExitInputError = 2;

/// Runs `gridtopo <subcommand> ...`; args excludes the program name.
int run_cli(const std::vector<std::string>& args);

}  // namespace gridtopo
