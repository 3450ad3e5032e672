#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace rankprop::cli {

/// Runs one subcommand (simulate, estimate, features, evaluate, power,
/// report, serve, replay). Returns the process exit code; failures print a
/// single `error: <class>: <message>` line to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run(int argc, const char* const* argv);

}  // namespace rankprop::cli
