#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace baet::cli {

/// Exit codes shared by every subcommand.
enum ExitCode : int { kOk = 0, kValidation = 1, kRuntime = 2 };

/// Runs one command line. args[0] is the program name.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace baet::cli
