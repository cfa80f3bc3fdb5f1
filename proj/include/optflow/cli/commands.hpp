#pragma once

#include "optflow/core.hpp"

#include <iosfwd>

namespace optflow::cli {

/// Process exit codes: 0 success, 1 validation or usage error, 2 I/O error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitIo = 2;

int exit_code_for(ErrorCode code);

/// Entry point behind the `optflow` executable. argv[0] is the program name.
/// Results go to files or `out`; failures print one line to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace optflow::cli
