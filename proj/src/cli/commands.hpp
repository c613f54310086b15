#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace shelldec::cli {

/// Process exit codes shared by every subcommand.
enum ExitCode : int {
  kConverged = 0,
  kNotConverged = 1,
  kUsage = 2,
  kIoFailure = 3,
};

/// Runs `dec3d <args...>` (args exclude the program name) and returns the
/// exit code. Normal output goes to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Default scattering table shipped with the project.
std::string default_table_path();

}  // namespace shelldec::cli
