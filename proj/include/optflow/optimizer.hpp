#pragma once

#include "optflow/core.hpp"
#include "optflow/knn.hpp"

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

namespace optflow {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

/// Moment accumulators for Adam with decoupled weight decay (AdamW).
///
/// Weight decay touches only the first `decayed_count` parameters; the
/// optimizer lays flow out first so the ego-motion is never decayed.
class AdamState {
public:
    AdamState(std::size_t size, AdamConfig config, std::size_t decayed_count = 0);

    /// One bias-corrected update in place. Throws Error(NonFiniteGradient) and
    /// Error(LengthMismatch); params are untouched on error.
    void step(std::span<double> params, std::span<const double> grads, double learning_rate);

    long long steps() const { return steps_; }
    const AdamConfig& config() const { return config_; }
    std::span<const double> first_moment() const { return m_; }
    std::span<const double> second_moment() const { return v_; }

private:
    AdamConfig config_;
    std::size_t decayed_count_;
    std::vector<double> m_;
    std::vector<double> v_;
    long long steps_ = 0;
};

/// Free-function form of `AdamState::step`.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads, double learning_rate);

struct FlowEstimate {
    FlowField flow;       // residual flow on top of the ego-motion
    RigidMotion motion;
    Diagnostics diagnostics;
};

/// Total displacement R p_i + t + f_i - p_i, comparable with ground-truth scene flow.
FlowField scene_flow(const PointCloud& source, const FlowEstimate& estimate);
FlowField scene_flow(const PointCloud& source, const FlowField& flow, const RigidMotion& motion);

struct ExecOptions {
    int threads = 1;
};

/// Optimizer state injected instead of the default (zero flow, ICP motion).
struct WarmStart {
    FlowField flow;
    RigidMotion motion;
    int iterations = 30;
};

/// Zero flow, ICP-initialized ego-motion, then AdamW on E_obj for up to
/// max_iters. Returns the iterate with the lowest recorded E_obj. A degenerate
/// objective ends the run with the best state so far (the ICP estimate if none)
/// and a warning.
FlowEstimate optimize_pair(const PointCloud& source, const PointCloud& target, const Hyperparams& hp,
                           const ExecOptions& exec = {});

/// Same as `optimize_pair` over an index built by the caller and shared across runs.
FlowEstimate optimize_pair(const PointCloud& source, const PointCloud& target,
                           std::shared_ptr<const SpatialIndex> target_index, const Hyperparams& hp,
                           const ExecOptions& exec, const WarmStart* warm = nullptr);

/// Full run on the first pair; each later pair starts from the previous
/// estimate (nearest-neighbor flow transfer, motion kept) for `warm_iters`.
std::vector<FlowEstimate> optimize_sequence(std::span<const PointCloud> clouds, const Hyperparams& hp,
                                            int warm_iters = 30, const ExecOptions& exec = {});

/// Flow for each point of `cloud` copied from the nearest point of the previous
/// pair's warped source.
FlowField transfer_flow(const PointCloud& previous_source, const FlowEstimate& previous, const PointCloud& cloud);

/// Seeded random partition of [0, n) into chunks of at most `chunk_size`.
std::vector<std::vector<std::uint32_t>> partition_chunks(std::size_t n, std::size_t chunk_size,
                                                         std::uint64_t seed);

/// Optimizes random source chunks independently against the full target and
/// scatters the flows back. Chunks run concurrently on up to exec.threads
/// workers. The reported motion is the largest chunk's.
FlowEstimate optimize_batched(const PointCloud& source, const PointCloud& target, const Hyperparams& hp,
                              std::size_t chunk_size = 8192, const ExecOptions& exec = {});

}  // namespace optflow
