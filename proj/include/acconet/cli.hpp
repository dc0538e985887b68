#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace acconet::cli {

/// Runs one of the train / infer / eval / plot-pr subcommands. args[0] is
/// the program name. Returns the process exit status.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace acconet::cli
