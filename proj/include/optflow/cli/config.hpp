#pragma once

#include "optflow/core.hpp"

#include <optional>
#include <string>

namespace optflow::cli {

/// Hyperparameters resolved in order: defaults, profile, config document,
/// command-line overrides. A profile given on the command line wins over one
/// named inside the document. Unknown keys and mistyped values raise
/// Error(InvalidConfig) naming the key; the result is validated before return.
Hyperparams resolve_hyperparams(const std::optional<std::string>& config_text,
                                const std::optional<std::string>& profile_flag,
                                const std::optional<std::uint64_t>& seed_flag);

/// Reads a whole file; Error(Io) naming the path on failure.
std::string read_text_file(const std::string& path);

}  // namespace optflow::cli
