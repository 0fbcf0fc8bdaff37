// include/joinss/cli.h
//
// The joinss command line: build, sample, oneshot, dynamic-replay, verify and
// bench. Exit codes: 0 success, 1 internal error, 2 usage error, 3 a failed
// statistical verification.

#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace joinss {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitVerifyFailed = 3;

// args excludes the program name.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace joinss
