#pragma once

#include "optflow/core.hpp"

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace optflow {

struct Neighbor {
    std::uint32_t index = 0;
    double distance = 0.0;  // Euclidean, not squared

    friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

inline constexpr double kUnbounded = std::numeric_limits<double>::infinity();

/// Squared distance with a fixed evaluation order; the tree and the brute-force
/// search share it so their results compare bit-for-bit.
inline double squared_distance(const Vec3& a, const Vec3& b) {
    const double dx = a.x() - b.x();
    const double dy = a.y() - b.y();
    const double dz = a.z() - b.z();
    return dx * dx + dy * dy + dz * dz;
}

/// Exact k-d tree over a fixed set of points.
///
/// Queries return neighbors sorted by (distance, index) ascending, restricted to
/// distance <= max_dist. The index is immutable after construction and safe for
/// concurrent queries.
class SpatialIndex {
public:
    /// Throws Error(EmptyCloud) when `points` is empty.
    explicit SpatialIndex(std::span<const Vec3> points);

    std::size_t size() const { return points_.size(); }

    /// Point by its original index.
    const Vec3& point(std::size_t index) const { return points_[index]; }
    std::span<const Vec3> points() const { return points_; }

    std::vector<Neighbor> query(const Vec3& q, std::size_t k, double max_dist = kUnbounded) const;

    /// Same as `query`, reusing `out` to avoid allocation in hot loops.
    void query(const Vec3& q, std::size_t k, double max_dist, std::vector<Neighbor>& out) const;

private:
    struct Node {
        std::uint32_t begin = 0;
        std::uint32_t end = 0;
        std::int32_t left = -1;
        std::int32_t right = -1;
        int axis = 0;
        double split = 0.0;
    };

    std::int32_t build(std::uint32_t begin, std::uint32_t end);

    std::vector<Vec3> points_;         // original order
    std::vector<Vec3> sorted_;         // tree order
    std::vector<std::uint32_t> ids_;   // tree order -> original index
    std::vector<Node> nodes_;
};

SpatialIndex build_index(const PointCloud& cloud);

std::vector<Neighbor> query_knn(const SpatialIndex& index, const Vec3& q, std::size_t k,
                                double max_dist = kUnbounded);

/// Linear scan with the same contract as `query_knn`.
std::vector<Neighbor> brute_force_knn(std::span<const Vec3> points, const Vec3& q, std::size_t k,
                                      double max_dist = kUnbounded);

}  // namespace optflow
