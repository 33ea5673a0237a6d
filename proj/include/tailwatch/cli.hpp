#pragma once

#include <iosfwd>

namespace tailwatch {

// Entry point behind the command-line binary: parses arguments, loads the run
// configuration, dispatches one subcommand (simulate, aggregate, fit,
// forecast, score, direction), and maps the error taxonomy onto exit codes
// (0 success; 2 config, 3 data, 4 sampler, 5 I/O). Human-readable progress
// goes to `out`, errors to `err`; wall-clock timestamps appear only in the
// run log, so data outputs rerun byte-identically.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace tailwatch
