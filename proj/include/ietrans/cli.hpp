#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ietrans {

// Entry point behind the `ietrans` binary. `args` excludes the program name.
// Returns 0 on success; errors go to `err` as one JSON object per line.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ietrans
