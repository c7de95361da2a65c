#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace gsray {

/// Entry point of the `gsray` tool. Returns 0 on success, 2 on a usage error
/// and 1 on a runtime error. args[0] is the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gsray
