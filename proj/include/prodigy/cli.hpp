#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace prodigy {

/// Entry point for the `prodigy` executable. `args` excludes the program name.
/// Exit codes: 0 success, 1 runtime or invariant failure, 2 usage or configuration error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace prodigy
