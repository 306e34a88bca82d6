#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace slu::cli {

enum ExitCode { kSuccess = 0, kValidation = 1, kRuntime = 2 };

/// Runs the command line `args` (without the program name). Output goes to
/// `out`, diagnostics to `err`; `in` feeds the predict command.
int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace slu::cli
