#pragma once

#include <iosfwd>

namespace lsplit {

// Entry point of the `lsplit` tool. Returns the process exit code; failures
// print one JSON error record to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace lsplit
