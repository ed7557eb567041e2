#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mgpa::cli {

enum ExitCode : int {
  kSuccess = 0,
  kUsage = 1,
  kNotConverged = 2,
  kDataError = 3,
};

// Runs one command line (args exclude the program name) and returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mgpa::cli
