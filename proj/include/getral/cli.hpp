#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace getral {

/// Subcommands: train, eval, predict, gradcheck, synth-data. `args` excludes
/// the program name. Returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace getral
