#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tap::cli {

/// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;  // a validation suite found a violation
inline constexpr int kExitConfig = 2;
inline constexpr int kExitEnv = 3;
inline constexpr int kExitNumeric = 4;

/// Runs `tap <command> [flags]` in-process. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tap::cli
