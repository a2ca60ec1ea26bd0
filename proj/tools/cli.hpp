#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace ngan::cli {

/// Runs one command line (args excludes the program name). Failures print a
/// single line `error=<Kind> detail="..."` to err and return nonzero.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ngan::cli
