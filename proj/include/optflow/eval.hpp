#pragma once

#include "optflow/core.hpp"

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

namespace optflow {

/// Mean per-point end-point error |est_i - gt_i|.
double epe(const FlowField& est, const FlowField& gt);

/// Fraction of points with error < abs_thresh or error / |gt| < rel_thresh.
/// Points with |gt| < 1e-12 use the absolute test only.
double accuracy(const FlowField& est, const FlowField& gt, double abs_thresh, double rel_thresh);

struct AngleError {
    double mean = 0.0;          // radians
    std::size_t skipped = 0;    // pairs with a near-zero vector
};

/// Mean angle between est_i and gt_i. Throws Error(AllDegenerate) when every
/// pair is skipped.
AngleError angle_error(const FlowField& est, const FlowField& gt);

/// Fraction of points with error >= thresh.
double outlier_frac(const FlowField& est, const FlowField& gt, double thresh = 0.3);

/// End-point error between a fully converged flow and a short warm-started one.
double eped(const FlowField& flow_full, const FlowField& flow_warm);

struct MetricsReport {
    double epe = 0.0;
    double acc_strict = 0.0;
    double acc_relax = 0.0;
    double angle_error = 0.0;
    double outlier_frac = 0.0;
    std::size_t n_points = 0;
    std::size_t skipped_angle_pairs = 0;
};

/// All metrics at once. When every angle pair is degenerate the angle error is
/// reported as 0 with every pair counted as skipped.
MetricsReport compute_metrics(const FlowField& est, const FlowField& gt);

/// Residual motion left after ego-compensation: point i is dynamic iff
/// |f_i| > speed_thresh.
std::vector<std::uint8_t> classify_dynamic(const FlowField& flow, const RigidMotion& motion,
                                           const PointCloud& source, double speed_thresh);

struct SceneConfig {
    std::size_t source_points = 4096;
    std::size_t object_count = 2;
    double ego_yaw_deg = 2.0;
    Vec3 ego_translation{0.5, 0.0, 0.0};
    double object_displacement = 0.5;  // meters, per dynamic box
    double object_yaw_deg = 0.0;
    double noise_sigma = 0.0;
    double drop_fraction = 0.0;  // target points removed in spatial patches
};

struct SyntheticScene {
    PointCloud source;
    PointCloud target;
    FlowField gt_flow;
    RigidMotion gt_motion;
    std::vector<std::uint8_t> dynamic_mask;
    SceneConfig config;
    std::uint64_t seed = 0;
};

/// Street-like static background (walls, poles, parked boxes) with
/// `object_count` moving boxes. Deterministic per (config, seed). Throws
/// Error(InvalidConfig).
SyntheticScene gen_scene(const SceneConfig& config, std::uint64_t seed);

struct SyntheticSequence {
    std::vector<PointCloud> clouds;
    std::vector<FlowField> gt_flows;  // one per consecutive pair
    RigidMotion gt_motion;            // per-frame ego-motion
    std::vector<std::uint8_t> dynamic_mask;
    SceneConfig config;
    std::uint64_t seed = 0;
};

/// The same scene advanced `frames - 1` times with constant ego and object motion.
SyntheticSequence gen_sequence(const SceneConfig& config, std::size_t frames, std::uint64_t seed);

/// static_world | ego_only | ego_plus_objects | occluded | sequence5
SceneConfig scene_preset(std::string_view name);
std::vector<std::string_view> scene_preset_names();

}  // namespace optflow
