#pragma once

#include <iosfwd>

namespace pwc {

/// Entry point of the `pwc` tool. `env` is an environ-style array used for
/// PWC_* overrides (nullptr disables them). Returns the process exit code;
/// every error is reported on `err` with a nonzero code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err,
            char** env = nullptr);

}  // namespace pwc
