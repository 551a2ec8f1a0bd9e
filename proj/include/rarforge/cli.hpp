#pragma once

namespace rarforge {

// Entry point behind the rar-forge binary. Exit codes: 0 success, 1 runtime
// failure, 2 usage error.
int run_cli(int argc, const char* const* argv);

}  // namespace rarforge
