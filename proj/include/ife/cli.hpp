#pragma once

#include <iosfwd>

namespace ife {

/// Entry point of the command-line tool. Results go to `out` (or the files named
/// by --out); errors are reported on `err` as one JSON record. Returns the exit
/// status: 0 ok, 2 input/config error, 3 numerical failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ife
