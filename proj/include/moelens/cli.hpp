#pragma once

#include <string>
#include <vector>

namespace moelens::cli {

enum ExitCode : int { kOk = 0, kUsageError = 1, kDataError = 2 };

/// Parses argv (without the program name) and runs the subcommand.
/// Usage problems print to stderr and return 1; invalid data returns 2.
int dispatch(const std::vector<std::string>& args);
int dispatch(int argc, const char* const* argv);

}  // namespace moelens::cli
