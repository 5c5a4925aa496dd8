#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace mmp::cli {

/// Exit codes of the command-line tool.
enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

/// Runs one invocation. args[0] is the program name. Results go to `out`,
/// logs and errors to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mmp::cli
