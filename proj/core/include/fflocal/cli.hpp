#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace fflocal {

/// Entry point of the `fflocal` tool. Returns the process exit status.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_command(int argc, char** argv);

}  // namespace fflocal
