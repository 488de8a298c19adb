#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace trajdiff::cli {

// args excludes the program name. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace trajdiff::cli
