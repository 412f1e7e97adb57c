#pragma once

#include <iosfwd>

namespace listap {

// Subcommands: train, eval, whiten, qe, gradcheck, report, counters.
// Returns 0 on success, 1 on usage errors, 2 on data errors.
int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace listap
