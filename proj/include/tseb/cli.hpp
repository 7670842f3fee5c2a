#pragma once

namespace tseb {

// Command-line front end. Parses argv, dispatches to the subcommand handlers
// and maps failures onto process exit codes: 0 success, 2 usage or
// configuration, 3 data, 4 solver.
int run_cli(int argc, const char* const* argv);

}  // namespace tseb
