#pragma once

#include <string>
#include <vector>

namespace difflik::cli {

/// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kUserError = 1;
inline constexpr int kInternalError = 2;

/// Runs the tool on argv without the program name and returns the exit code.
/// Diagnostics go to stderr; nothing here throws.
int run(const std::vector<std::string>& args);

}  // namespace difflik::cli
