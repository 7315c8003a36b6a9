#pragma once

#include <iosfwd>

namespace disent {

/// Entry point of the `disent` command-line tool. Returns the process exit code:
/// 0 on success, 1 for configuration or input errors, 2 for numeric or runtime aborts.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace disent
