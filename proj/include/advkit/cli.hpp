#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace advkit::cli {

// Process exit codes.
enum ExitStatus : int {
  kOk = 0,
  kFailuresFound = 1,  // verification or validation failures
  kUsageError = 2,     // bad flags, unreadable or malformed input
};

// Runs the command line. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace advkit::cli
