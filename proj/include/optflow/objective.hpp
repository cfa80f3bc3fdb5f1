#pragma once

#include "optflow/core.hpp"
#include "optflow/correspondence.hpp"
#include "optflow/knn.hpp"
#include "optflow/rigidity.hpp"

#include <memory>
#include <span>
#include <vector>

namespace optflow {

/// R(r) p_i + t + f_i for every source point.
std::vector<Vec3> warp(const PointCloud& source, const FlowField& flow, const RigidMotion& motion);

/// One direction of the soft fit loss.
struct FitTerm {
    double energy = 0.0;
    std::size_t valid_count = 0;
    // Query minus soft target; zero for invalid queries. Forward: one per source
    // point. Reverse: one per target point.
    std::vector<Vec3> residuals;
    SoftCorrespondenceSet correspondences;
    // dE/dx_i with respect to every warped source point x_i.
    std::vector<Vec3> grad_warped;
};

/// Warped source points pulled toward soft targets in `target`, neighbor sets fixed.
FitTerm forward_fit(std::span<const Vec3> warped, std::span<const Vec3> target, NeighborSets sets, double epsilon,
                    int threads = 1);

/// Target points pulled toward soft averages of the warped source, neighbor sets fixed.
FitTerm reverse_fit(std::span<const Vec3> warped, std::span<const Vec3> target, NeighborSets sets, double epsilon,
                    int threads = 1);

FitTerm fit_energy_forward(const PointCloud& source, const FlowField& flow, const RigidMotion& motion,
                           const SpatialIndex& target_index, const Hyperparams& hp, double d_thresh);

/// `warped_source_index` must index warp(source, flow, motion).
FitTerm fit_energy_reverse(const PointCloud& source, const FlowField& flow, const RigidMotion& motion,
                           const SpatialIndex& warped_source_index, const PointCloud& target, const Hyperparams& hp,
                           double d_thresh);

struct ObjectiveEvaluation {
    double e_fit_forward = 0.0;
    double e_fit_reverse = 0.0;
    double e_fit = 0.0;
    double e_rigid = 0.0;
    double e_obj = 0.0;
    double d_thresh = 0.0;
    std::vector<Vec3> grad_flow;
    Vec3 grad_r = Vec3::Zero();
    Vec3 grad_t = Vec3::Zero();
    std::size_t valid_forward = 0;
    std::size_t valid_reverse = 0;
};

/// Neighbor membership chosen at one iterate; reused to evaluate nearby states
/// with the selection held fixed.
struct FrozenNeighbors {
    double d_thresh = 0.0;
    NeighborSets forward;
    NeighborSets reverse;  // empty when the fit is unidirectional
};

/// E_obj = E_fit + alpha_rigid * E_rigid with analytic gradients in (F, r, t).
///
/// Neighbor sets are a discrete selection redone at each `evaluate`; inside a
/// selection the weights are differentiated through the distances. The
/// referenced clouds must outlive the objective.
class Objective {
public:
    Objective(const PointCloud& source, const PointCloud& target, const Hyperparams& hp, int threads = 1);
    Objective(const PointCloud& source, const PointCloud& target, const Hyperparams& hp,
              std::shared_ptr<const SpatialIndex> target_index, std::shared_ptr<const RigidityGraph> graph,
              int threads = 1);

    const RigidityGraph& graph() const { return *graph_; }
    const SpatialIndex& target_index() const { return *target_index_; }
    const Hyperparams& hyperparams() const { return hp_; }

    FrozenNeighbors select(const FlowField& flow, const RigidMotion& motion, double d_thresh) const;

    /// Selects neighbors at threshold_at(iter) and evaluates. Throws
    /// Error(DegenerateProblem) when no point has a correspondence in any
    /// active direction.
    ObjectiveEvaluation evaluate(const FlowField& flow, const RigidMotion& motion, int iter) const;

    ObjectiveEvaluation evaluate_frozen(const FlowField& flow, const RigidMotion& motion,
                                        const FrozenNeighbors& frozen) const;

private:
    const PointCloud& source_;
    const PointCloud& target_;
    Hyperparams hp_;
    std::shared_ptr<const SpatialIndex> target_index_;
    std::shared_ptr<const RigidityGraph> graph_;
    int threads_;
};

ObjectiveEvaluation evaluate_objective(const PointCloud& source, const PointCloud& target, const FlowField& flow,
                                       const RigidMotion& motion, const RigidityGraph& graph, const Hyperparams& hp,
                                       int iter);

}  // namespace optflow
