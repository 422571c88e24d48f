#pragma once

#include <string>
#include <vector>

namespace talesumm::cli {

/// Exit codes: 0 success, 1 invalid input / parse / IO / config error
/// (including unknown flags), 2 numerical or internal failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitRuntime = 2;

/// Runs one subcommand; `args` excludes the program name. Diagnostics go to
/// stderr. Log verbosity comes from the TALESUMM_LOG environment variable
/// (trace, debug, info, warn, error, off; default warn).
int run(const std::vector<std::string>& args);

}  // namespace talesumm::cli
