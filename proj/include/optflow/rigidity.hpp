#pragma once

#include "optflow/core.hpp"

#include <cstdint>
#include <vector>

namespace optflow {

struct RigidityEdge {
    std::uint32_t from = 0;
    std::uint32_t to = 0;
    double weight = 0.0;  // e^{-d^2} over the untransformed source
};

/// Directed k-NN graph over the source cloud. Edges are grouped by `from` in
/// ascending order, each group sorted like a k-NN query result.
struct RigidityGraph {
    std::size_t node_count = 0;
    std::vector<RigidityEdge> edges;
};

/// Throws Error(EmptyCloud) when the source has fewer than two points.
RigidityGraph build_rigidity_graph(const PointCloud& source, int k_rigid, int threads = 1);

/// Sum over directed edges of w_ij * |f_i - f_j|^2. Throws Error(LengthMismatch).
double rigidity_energy(const RigidityGraph& graph, const FlowField& flow);

/// dE/df_i. Throws Error(LengthMismatch).
std::vector<Vec3> rigidity_gradient(const RigidityGraph& graph, const FlowField& flow);

}  // namespace optflow
