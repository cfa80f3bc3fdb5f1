#pragma once

#include "optflow/core.hpp"
#include "optflow/knn.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace optflow {

/// e^{-d^2}
double similarity(double d);

/// exp((sim - 1) / epsilon); equals 1 only when sim == 1.
double corr_weight(double sim, double epsilon);

/// Distance threshold in effect at iteration `iter`: d_init halved once per
/// completed `halving_interval`, never below d_floor.
double threshold_at(int iter, double d_init, int halving_interval, double d_floor);
double threshold_at(int iter, const Hyperparams& hp);

/// First iteration at which the schedule has reached its floor.
int threshold_floor_iteration(const Hyperparams& hp);

/// Frozen neighbor selection per query point, stored CSR-style.
struct NeighborSets {
    std::vector<std::size_t> offsets{0};
    std::vector<std::uint32_t> indices;

    std::size_t size() const { return offsets.size() - 1; }
    std::span<const std::uint32_t> of(std::size_t i) const {
        return {indices.data() + offsets[i], offsets[i + 1] - offsets[i]};
    }
};

/// k nearest references within `d_thresh` for every query.
NeighborSets select_neighbors(std::span<const Vec3> queries, const SpatialIndex& refs, int k, double d_thresh,
                              int threads = 1);

/// Soft correspondences of a set of query points into a reference set.
///
/// Entries are aligned with the neighbor sets they were computed from. `weight`
/// holds the raw W_ij (it may underflow to 0 for far neighbors); `norm_weight`
/// holds W_ij / sum_j W_ij evaluated in a max-shifted form, so q_avg stays
/// defined whenever at least one neighbor exists.
struct SoftCorrespondenceSet {
    NeighborSets neighbors;
    std::vector<double> distance;
    std::vector<double> sim;
    std::vector<double> weight;
    std::vector<double> norm_weight;
    std::vector<Vec3> q_avg;
    std::vector<std::uint8_t> valid;

    std::size_t size() const { return q_avg.size(); }
    std::size_t valid_count() const;
};

/// Weights and soft targets for fixed neighbor sets.
SoftCorrespondenceSet soft_correspondences(std::span<const Vec3> queries, std::span<const Vec3> refs,
                                           NeighborSets neighbors, double epsilon, int threads = 1);

/// Neighbor selection within `d_thresh` followed by `soft_correspondences`.
SoftCorrespondenceSet build_soft_correspondences(std::span<const Vec3> queries, const SpatialIndex& target_index,
                                                 int k_local, double epsilon, double d_thresh, int threads = 1);

}  // namespace optflow
