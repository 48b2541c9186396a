#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace jbsde {

/// Exit codes of the command-line front end.
enum ExitCode : int { kExitOk = 0, kExitVerdict = 1, kExitUsage = 2, kExitNumerical = 3 };

/// Entry point of `jbsde simulate|solve|audit|compare|converse|oracles`.
/// args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace jbsde
