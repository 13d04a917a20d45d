#pragma once

#include <ostream>

namespace tdlab {

/// Entry point of the `tdlab` command-line tool. Returns the process exit
/// code: 0 on success, 1 for usage or validation failures, 2 for numerical
/// failures.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace tdlab
