#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ptext::cli {

/// Runs one command. `args` excludes the program name. Returns 0 on success,
/// 1 on usage or validation errors and 2 on runtime errors.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ptext::cli
