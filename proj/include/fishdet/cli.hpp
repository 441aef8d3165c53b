#pragma once

namespace fishdet::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kNumericFault = 3 };

/// Parses argv, runs one subcommand and maps failures to exit codes.
int run(int argc, const char* const* argv);

}  // namespace fishdet::cli
