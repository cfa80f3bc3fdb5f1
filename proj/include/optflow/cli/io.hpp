#pragma once

#include "optflow/core.hpp"

#include <filesystem>
#include <optional>

namespace optflow::cli {

/// Binary cloud layout: "OFPC", u32 version (1), u64 count, count x 3 float32.
/// Flow files use "OFFL" and may end with "OFRT" followed by 6 float64 (r, t).
/// Every integer and float is little-endian.
inline constexpr char kCloudMagic[4] = {'O', 'F', 'P', 'C'};
inline constexpr char kFlowMagic[4] = {'O', 'F', 'F', 'L'};
inline constexpr char kMotionMagic[4] = {'O', 'F', 'R', 'T'};
inline constexpr std::uint32_t kFormatVersion = 1;

struct FlowFileData {
    FlowField flow;
    std::optional<RigidMotion> motion;
};

/// Reads a binary cloud, or an ASCII .xyz file (three reals per line, '#'
/// starts a comment). Structural problems raise Error(Io) naming the path;
/// NaN or Inf coordinates raise Error(NonFiniteCoordinate).
PointCloud read_cloud(const std::filesystem::path& path);

void write_cloud(const std::filesystem::path& path, const PointCloud& cloud);

FlowFileData read_flow(const std::filesystem::path& path);

void write_flow(const std::filesystem::path& path, const FlowField& flow,
                const std::optional<RigidMotion>& motion = std::nullopt);

}  // namespace optflow::cli
