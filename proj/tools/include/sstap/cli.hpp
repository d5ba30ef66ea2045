#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace sstap::cli {

// Exit codes of the command-line tool.
enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

// Runs one subcommand. argv[0] is the program name. Diagnostics go to `err`,
// results and reports to `out`.
int dispatch(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);

}  // namespace sstap::cli
