#pragma once

namespace ugclab {

enum ExitCode : int {
  kExitOk = 0,
  kExitOther = 1,
  kExitUsage = 2,     ///< bad flag or config value
  kExitIo = 3,        ///< missing or unwritable file
  kExitData = 4,      ///< input violates its schema (UTF-8, line counts, formats)
  kExitTraining = 5,  ///< model training diverged
};

/// Entry point of the `ugclab` command. Returns the process exit code.
int run_cli(int argc, const char* const* argv);

}  // namespace ugclab
