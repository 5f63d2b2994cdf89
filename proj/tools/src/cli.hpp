#pragma once

#include <exception>
#include <ostream>
#include <string>
#include <vector>

namespace mssp::cli {

enum ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kConfigFailure = 2,
  kDataFailure = 3,
  kNumericalFailure = 4,
};

/// Runs one `mssp` invocation. `args[0]` is the program name. Results go to
/// `out`; a failure prints exactly one "error: <kind>: <message>" line to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Exit code and stable kind tag for an exception escaping a command.
std::pair<int, std::string> classify(const std::exception& e);

}  // namespace mssp::cli
