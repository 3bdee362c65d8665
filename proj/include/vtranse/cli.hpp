#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace vtranse::cli {

enum ExitCode : int {
  kSuccess = 0,
  kUsageError = 1,
  kDataError = 2,
  kNumericError = 3,
};

// Runs the command line (args excludes the program name). Never throws;
// failures are reported on `err` and mapped to an ExitCode.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vtranse::cli
