#include "optflow/rigidity.hpp"

#include "optflow/correspondence.hpp"
#include "optflow/knn.hpp"
#include "optflow/parallel.hpp"

#include <string>

namespace optflow {

namespace {

void check_lengths(const RigidityGraph& graph, const FlowField& flow) {
    if (flow.size() != graph.node_count) {
        throw Error(ErrorCode::LengthMismatch, "flow has " + std::to_string(flow.size()) +
                                                   " vectors but the rigidity graph has " +
                                                   std::to_string(graph.node_count) + " nodes");
    }
}

}  // namespace

RigidityGraph build_rigidity_graph(const PointCloud& source, int k_rigid, int threads) {
    if (source.size() < 2) throw Error(ErrorCode::EmptyCloud, "rigidity graph needs at least two source points");
    const SpatialIndex index(source.view());
    const std::size_t n = source.size();
    // One extra neighbor: the query point itself comes back first at distance 0
    // unless a duplicate with a smaller index shadows it.
    const std::size_t k = static_cast<std::size_t>(k_rigid);
    std::vector<std::vector<RigidityEdge>> per_node(n);
    parallel_for(n, threads, [&](std::size_t begin, std::size_t end) {
        std::vector<Neighbor> found;
        for (std::size_t i = begin; i < end; ++i) {
            index.query(source[i], k + 1, kUnbounded, found);
            auto& out = per_node[i];
            out.reserve(k);
            for (const auto& nb : found) {
                if (nb.index == i || out.size() == k) continue;
                out.push_back({static_cast<std::uint32_t>(i), nb.index, similarity(nb.distance)});
            }
        }
    });
    RigidityGraph graph;
    graph.node_count = n;
    graph.edges.reserve(n * k);
    for (auto& group : per_node) graph.edges.insert(graph.edges.end(), group.begin(), group.end());
    return graph;
}

double rigidity_energy(const RigidityGraph& graph, const FlowField& flow) {
    check_lengths(graph, flow);
    double energy = 0.0;
    for (const auto& e : graph.edges) {
        energy += e.weight * (flow[e.from] - flow[e.to]).squaredNorm();
    }
    return energy;
}

std::vector<Vec3> rigidity_gradient(const RigidityGraph& graph, const FlowField& flow) {
    check_lengths(graph, flow);
    std::vector<Vec3> grad(graph.node_count, Vec3::Zero());
    for (const auto& e : graph.edges) {
        const Vec3 g = 2.0 * e.weight * (flow[e.from] - flow[e.to]);
        grad[e.from] += g;
        grad[e.to] -= g;
    }
    return grad;
}

}  // namespace optflow
