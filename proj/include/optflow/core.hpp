#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace optflow {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

enum class ErrorCode {
    EmptyCloud,
    NonFiniteCoordinate,
    InvalidHyperparam,
    LengthMismatch,
    DegenerateProblem,
    NonFiniteGradient,
    AllDegenerate,
    InvalidConfig,
    Io,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above and a
/// message naming the offending field or path.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message);

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

/// Ordered 3D points in meters. The position in `points` is the point's identity.
struct PointCloud {
    std::vector<Vec3> points;

    PointCloud() = default;
    explicit PointCloud(std::vector<Vec3> pts) : points(std::move(pts)) {}

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
    const Vec3& operator[](std::size_t i) const { return points[i]; }
    std::span<const Vec3> view() const { return points; }
};

/// Per-source-point motion vectors in meters, length-locked to the source cloud.
struct FlowField {
    std::vector<Vec3> vectors;

    FlowField() = default;
    explicit FlowField(std::vector<Vec3> v) : vectors(std::move(v)) {}

    static FlowField zeros(std::size_t n) { return FlowField(std::vector<Vec3>(n, Vec3::Zero())); }

    std::size_t size() const { return vectors.size(); }
    const Vec3& operator[](std::size_t i) const { return vectors[i]; }
    Vec3& operator[](std::size_t i) { return vectors[i]; }
};

/// Rigid transform p -> R(r) p + t with r a rotation vector (axis * angle, radians).
struct RigidMotion {
    Vec3 r = Vec3::Zero();
    Vec3 t = Vec3::Zero();

    static RigidMotion identity() { return {}; }
};

/// How the forward and reverse fit terms are combined.
enum class FitCombine { Sum, Mean };

struct Hyperparams {
    int k_local = 15;
    int k_rigid = 50;
    double epsilon = 0.03;
    double alpha_rigid = 9.57;
    double d_init = 2.0;
    double d_floor = 0.2;
    int halving_interval = 100;
    double learning_rate = 4e-3;
    int max_iters = 600;
    int early_stop_patience = 30;
    double early_stop_rel_tol = 1e-4;
    bool bidirectional = true;
    std::uint64_t seed = 0;

    FitCombine fit_combine = FitCombine::Sum;
    // Decoupled weight decay, applied to the flow parameters only.
    double weight_decay = 0.01;
    // When false the ego-motion stays fixed at identity and ICP is skipped.
    bool ego_motion = true;
    int icp_max_iters = 30;
    double icp_rejection_dist = 2.0;
};

/// Names accepted by `profile_hyperparams`.
std::span<const std::string_view> profile_names();

/// Defaults with the per-dataset k_local / alpha_rigid applied.
/// Throws Error(InvalidConfig) for an unknown name.
Hyperparams profile_hyperparams(std::string_view name);

/// Throws Error(InvalidHyperparam) naming the first field that violates its range.
void validate_hyperparams(const Hyperparams& hp);

/// Throws Error(NonFiniteCoordinate) naming `what` and the point index.
void require_finite(std::span<const Vec3> values, std::string_view what);

struct IterationRecord {
    int iteration = 0;
    double e_fit = 0.0;
    double e_rigid = 0.0;
    double e_obj = 0.0;
    double d_thresh = 0.0;
    std::size_t valid_forward = 0;
    std::size_t valid_reverse = 0;
};

enum class StopReason { MaxIters, EarlyStop, Degenerate };

std::string_view to_string(StopReason reason);

struct Diagnostics {
    std::vector<IterationRecord> trace;
    double wall_seconds = 0.0;
    double icp_seconds = 0.0;
    StopReason stop_reason = StopReason::MaxIters;
    int best_iteration = -1;
    double best_e_obj = 0.0;
    std::vector<std::string> warnings;
};

/// Clouds and hyperparameters after validation. k_local and k_rigid are clamped
/// to what the clouds can supply; each clamp leaves a message in `warnings`.
struct Problem {
    PointCloud source;
    PointCloud target;
    Hyperparams hp;
    std::vector<std::string> warnings;
};

Problem validate_problem(PointCloud source, PointCloud target, Hyperparams hp);

}  // namespace optflow
