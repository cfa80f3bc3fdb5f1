#include "optflow/knn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace optflow {

namespace {

constexpr std::uint32_t kLeafSize = 12;

struct Candidate {
    double d2;
    std::uint32_t id;
};

bool closer(const Candidate& a, const Candidate& b) {
    return a.d2 < b.d2 || (a.d2 == b.d2 && a.id < b.id);
}

bool within_radius(double d2, double max_dist) { return std::sqrt(d2) <= max_dist; }

// Sorted buffer of at most k candidates.
class CandidateList {
public:
    CandidateList(std::size_t k, double max_dist)
        : k_(k), max_dist_(max_dist),
          radius_bound_(std::isinf(max_dist) ? max_dist : max_dist * max_dist * (1.0 + 1e-12)) {
        items_.reserve(k + 1);
    }

    double bound() const { return items_.size() == k_ ? items_.back().d2 : radius_bound_; }

    void offer(double d2, std::uint32_t id) {
        if (d2 > bound() || !within_radius(d2, max_dist_)) return;
        const Candidate c{d2, id};
        if (items_.size() == k_ && !closer(c, items_.back())) return;
        auto pos = std::upper_bound(items_.begin(), items_.end(), c, closer);
        items_.insert(pos, c);
        if (items_.size() > k_) items_.pop_back();
    }

    void emit(std::vector<Neighbor>& out) const {
        out.clear();
        out.reserve(items_.size());
        for (const auto& c : items_) out.push_back({c.id, std::sqrt(c.d2)});
    }

private:
    std::size_t k_;
    double max_dist_;
    double radius_bound_;
    std::vector<Candidate> items_;
};

}  // namespace

SpatialIndex::SpatialIndex(std::span<const Vec3> points) : points_(points.begin(), points.end()) {
    if (points_.empty()) throw Error(ErrorCode::EmptyCloud, "cannot index an empty cloud");
    ids_.resize(points_.size());
    std::iota(ids_.begin(), ids_.end(), 0u);
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    build(0, static_cast<std::uint32_t>(points_.size()));
    sorted_.resize(points_.size());
    for (std::size_t i = 0; i < ids_.size(); ++i) sorted_[i] = points_[ids_[i]];
}

std::int32_t SpatialIndex::build(std::uint32_t begin, std::uint32_t end) {
    const auto node_id = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back({begin, end, -1, -1, 0, 0.0});
    if (end - begin <= kLeafSize) return node_id;

    Vec3 lo = points_[ids_[begin]];
    Vec3 hi = lo;
    for (std::uint32_t i = begin + 1; i < end; ++i) {
        lo = lo.cwiseMin(points_[ids_[i]]);
        hi = hi.cwiseMax(points_[ids_[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);

    const std::uint32_t mid = begin + (end - begin) / 2;
    std::nth_element(ids_.begin() + begin, ids_.begin() + mid, ids_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) {
                         const double ca = points_[a][axis];
                         const double cb = points_[b][axis];
                         return ca < cb || (ca == cb && a < b);
                     });
    const double split = points_[ids_[mid]][axis];

    const std::int32_t left = build(begin, mid);
    const std::int32_t right = build(mid, end);
    nodes_[node_id].axis = axis;
    nodes_[node_id].split = split;
    nodes_[node_id].left = left;
    nodes_[node_id].right = right;
    return node_id;
}

std::vector<Neighbor> SpatialIndex::query(const Vec3& q, std::size_t k, double max_dist) const {
    std::vector<Neighbor> out;
    query(q, k, max_dist, out);
    return out;
}

void SpatialIndex::query(const Vec3& q, std::size_t k, double max_dist, std::vector<Neighbor>& out) const {
    out.clear();
    if (k == 0 || !(max_dist >= 0.0)) return;
    CandidateList best(k, max_dist);

    // Iterative depth-first descent; far children are revisited only when the
    // splitting plane is no farther than the current k-th candidate.
    struct Pending {
        std::int32_t node;
        double plane_d2;
    };
    Pending stack[64];
    int top = 0;
    stack[top++] = {0, 0.0};
    while (top > 0) {
        const Pending item = stack[--top];
        if (item.plane_d2 > best.bound()) continue;
        const Node& node = nodes_[item.node];
        if (node.left < 0) {
            for (std::uint32_t i = node.begin; i < node.end; ++i) {
                best.offer(squared_distance(q, sorted_[i]), ids_[i]);
            }
            continue;
        }
        const double diff = q[node.axis] - node.split;
        const std::int32_t near = diff < 0.0 ? node.left : node.right;
        const std::int32_t far = diff < 0.0 ? node.right : node.left;
        stack[top++] = {far, diff * diff};
        stack[top++] = {near, 0.0};
    }
    best.emit(out);
}

SpatialIndex build_index(const PointCloud& cloud) { return SpatialIndex(cloud.view()); }

std::vector<Neighbor> query_knn(const SpatialIndex& index, const Vec3& q, std::size_t k, double max_dist) {
    return index.query(q, k, max_dist);
}

std::vector<Neighbor> brute_force_knn(std::span<const Vec3> points, const Vec3& q, std::size_t k,
                                      double max_dist) {
    std::vector<Candidate> all;
    all.reserve(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        const double d2 = squared_distance(q, points[i]);
        if (within_radius(d2, max_dist)) all.push_back({d2, static_cast<std::uint32_t>(i)});
    }
    const std::size_t keep = std::min(k, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(), closer);
    std::vector<Neighbor> out;
    out.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) out.push_back({all[i].id, std::sqrt(all[i].d2)});
    return out;
}

}  // namespace optflow
