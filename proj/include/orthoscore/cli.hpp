#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace orthoscore::cli {

enum ExitCode : int {
  kSuccess = 0,
  kStatisticalFailure = 1,
  kUsageError = 2,
};

/// Runs the command line (without the program name). Never throws.
int run(std::vector<std::string> args, std::ostream& out, std::ostream& err);

}  // namespace orthoscore::cli
