#include "optflow/correspondence.hpp"

#include "optflow/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace optflow {

double similarity(double d) { return std::exp(-d * d); }

double corr_weight(double sim, double epsilon) { return std::exp((sim - 1.0) / epsilon); }

double threshold_at(int iter, double d_init, int halving_interval, double d_floor) {
    const int halvings = std::max(iter, 0) / std::max(halving_interval, 1);
    double d = d_init;
    for (int h = 0; h < halvings && d > d_floor; ++h) d *= 0.5;
    return std::max(d, d_floor);
}

double threshold_at(int iter, const Hyperparams& hp) {
    return threshold_at(iter, hp.d_init, hp.halving_interval, hp.d_floor);
}

int threshold_floor_iteration(const Hyperparams& hp) {
    int halvings = 0;
    for (double d = hp.d_init; d > hp.d_floor; d *= 0.5) ++halvings;
    return halvings * hp.halving_interval;
}

std::size_t SoftCorrespondenceSet::valid_count() const {
    return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

NeighborSets select_neighbors(std::span<const Vec3> queries, const SpatialIndex& refs, int k, double d_thresh,
                              int threads) {
    const std::size_t n = queries.size();
    std::vector<std::vector<Neighbor>> found(n);
    parallel_for(n, threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            refs.query(queries[i], static_cast<std::size_t>(k), d_thresh, found[i]);
        }
    });
    NeighborSets sets;
    sets.offsets.resize(n + 1);
    sets.offsets[0] = 0;
    for (std::size_t i = 0; i < n; ++i) sets.offsets[i + 1] = sets.offsets[i] + found[i].size();
    sets.indices.resize(sets.offsets[n]);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t s = 0; s < found[i].size(); ++s) sets.indices[sets.offsets[i] + s] = found[i][s].index;
    }
    return sets;
}

SoftCorrespondenceSet soft_correspondences(std::span<const Vec3> queries, std::span<const Vec3> refs,
                                           NeighborSets neighbors, double epsilon, int threads) {
    const std::size_t n = queries.size();
    SoftCorrespondenceSet out;
    const std::size_t m = neighbors.indices.size();
    out.distance.resize(m);
    out.sim.resize(m);
    out.weight.resize(m);
    out.norm_weight.resize(m);
    out.q_avg.assign(n, Vec3::Zero());
    out.valid.assign(n, 0);

    parallel_for(n, threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const std::size_t lo = neighbors.offsets[i];
            const std::size_t hi = neighbors.offsets[i + 1];
            if (lo == hi) continue;
            double max_log = -std::numeric_limits<double>::infinity();
            for (std::size_t e = lo; e < hi; ++e) {
                const double d = std::sqrt(squared_distance(queries[i], refs[neighbors.indices[e]]));
                out.distance[e] = d;
                out.sim[e] = similarity(d);
                out.weight[e] = corr_weight(out.sim[e], epsilon);
                max_log = std::max(max_log, (out.sim[e] - 1.0) / epsilon);
            }
            double total = 0.0;
            for (std::size_t e = lo; e < hi; ++e) {
                out.norm_weight[e] = std::exp((out.sim[e] - 1.0) / epsilon - max_log);
                total += out.norm_weight[e];
            }
            Vec3 avg = Vec3::Zero();
            for (std::size_t e = lo; e < hi; ++e) {
                out.norm_weight[e] /= total;
                avg += out.norm_weight[e] * refs[neighbors.indices[e]];
            }
            out.q_avg[i] = avg;
            out.valid[i] = 1;
        }
    });
    out.neighbors = std::move(neighbors);
    return out;
}

SoftCorrespondenceSet build_soft_correspondences(std::span<const Vec3> queries, const SpatialIndex& target_index,
                                                 int k_local, double epsilon, double d_thresh, int threads) {
    return soft_correspondences(queries, target_index.points(),
                                select_neighbors(queries, target_index, k_local, d_thresh, threads), epsilon,
                                threads);
}

}  // namespace optflow
