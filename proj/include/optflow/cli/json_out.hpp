#pragma once

#include "optflow/core.hpp"
#include "optflow/eval.hpp"
#include "optflow/optimizer.hpp"

#include "json.hpp"

#include <filesystem>
#include <string>

namespace optflow::cli {

using Json = nlohmann::ordered_json;

/// Rounds to 6 significant digits so the printed JSON is stable.
double round6(double value);

Json to_json(const MetricsReport& report);
Json to_json(const RigidMotion& motion);
Json to_json(const Hyperparams& hp);
Json to_json(const Diagnostics& diagnostics);

/// Two-space indented, trailing newline.
std::string dump(const Json& doc);

void write_json(const std::filesystem::path& path, const Json& doc);

}  // namespace optflow::cli
