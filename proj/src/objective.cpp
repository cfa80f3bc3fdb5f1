#include "optflow/objective.hpp"

#include "optflow/egomotion.hpp"
#include "optflow/parallel.hpp"

#include <string>

namespace optflow {

namespace {

std::shared_ptr<const RigidityGraph> make_graph(const PointCloud& source, int k_rigid, int threads) {
    if (source.size() < 2) {
        auto empty = std::make_shared<RigidityGraph>();
        empty->node_count = source.size();
        return empty;
    }
    return std::make_shared<RigidityGraph>(build_rigidity_graph(source, k_rigid, threads));
}

double ordered_sum(const std::vector<double>& values) {
    double total = 0.0;
    for (double v : values) total += v;
    return total;
}

void check_flow(const PointCloud& source, const FlowField& flow) {
    if (flow.size() != source.size()) {
        throw Error(ErrorCode::LengthMismatch, "flow has " + std::to_string(flow.size()) + " vectors for " +
                                                   std::to_string(source.size()) + " source points");
    }
}

}  // namespace

std::vector<Vec3> warp(const PointCloud& source, const FlowField& flow, const RigidMotion& motion) {
    check_flow(source, flow);
    const Mat3 rotation = rodrigues(motion.r);
    std::vector<Vec3> out(source.size());
    for (std::size_t i = 0; i < source.size(); ++i) out[i] = apply(motion, rotation, source[i]) + flow[i];
    return out;
}

FitTerm forward_fit(std::span<const Vec3> warped, std::span<const Vec3> target, NeighborSets sets, double epsilon,
                    int threads) {
    FitTerm term;
    term.correspondences = soft_correspondences(warped, target, std::move(sets), epsilon, threads);
    const auto& sc = term.correspondences;
    const std::size_t n = warped.size();
    term.residuals.assign(n, Vec3::Zero());
    term.grad_warped.assign(n, Vec3::Zero());
    std::vector<double> energy(n, 0.0);

    parallel_for(n, threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            if (!sc.valid[i]) continue;
            const Vec3& x = warped[i];
            const Vec3 r = x - sc.q_avg[i];
            energy[i] = r.squaredNorm();
            term.residuals[i] = r;
            // d q_avg / d x enters through every weight of the selection.
            Vec3 g = 2.0 * r;
            for (std::size_t e = sc.neighbors.offsets[i]; e < sc.neighbors.offsets[i + 1]; ++e) {
                const Vec3& q = target[sc.neighbors.indices[e]];
                const double c = 4.0 * sc.norm_weight[e] * sc.sim[e] / epsilon * r.dot(q - sc.q_avg[i]);
                g += c * (x - q);
            }
            term.grad_warped[i] = g;
        }
    });
    term.energy = ordered_sum(energy);
    term.valid_count = sc.valid_count();
    return term;
}

FitTerm reverse_fit(std::span<const Vec3> warped, std::span<const Vec3> target, NeighborSets sets, double epsilon,
                    int threads) {
    FitTerm term;
    term.correspondences = soft_correspondences(target, warped, std::move(sets), epsilon, threads);
    const auto& sc = term.correspondences;
    const std::size_t m = target.size();
    term.residuals.assign(m, Vec3::Zero());
    std::vector<double> energy(m, 0.0);
    std::vector<Vec3> edge_grad(sc.neighbors.indices.size(), Vec3::Zero());

    parallel_for(m, threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t j = begin; j < end; ++j) {
            if (!sc.valid[j]) continue;
            const Vec3& q = target[j];
            const Vec3 r = q - sc.q_avg[j];
            energy[j] = r.squaredNorm();
            term.residuals[j] = r;
            for (std::size_t e = sc.neighbors.offsets[j]; e < sc.neighbors.offsets[j + 1]; ++e) {
                const Vec3& x = warped[sc.neighbors.indices[e]];
                const double w = sc.norm_weight[e];
                const double c = 4.0 * w * sc.sim[e] / epsilon * r.dot(x - sc.q_avg[j]);
                edge_grad[e] = -2.0 * w * r + c * (x - q);
            }
        }
    });
    // Scatter in edge order so the sum does not depend on the thread count.
    term.grad_warped.assign(warped.size(), Vec3::Zero());
    for (std::size_t e = 0; e < edge_grad.size(); ++e) term.grad_warped[sc.neighbors.indices[e]] += edge_grad[e];
    term.energy = ordered_sum(energy);
    term.valid_count = sc.valid_count();
    return term;
}

FitTerm fit_energy_forward(const PointCloud& source, const FlowField& flow, const RigidMotion& motion,
                           const SpatialIndex& target_index, const Hyperparams& hp, double d_thresh) {
    const auto warped = warp(source, flow, motion);
    return forward_fit(warped, target_index.points(), select_neighbors(warped, target_index, hp.k_local, d_thresh),
                       hp.epsilon);
}

FitTerm fit_energy_reverse(const PointCloud& source, const FlowField& flow, const RigidMotion& motion,
                           const SpatialIndex& warped_source_index, const PointCloud& target, const Hyperparams& hp,
                           double d_thresh) {
    const auto warped = warp(source, flow, motion);
    return reverse_fit(warped, target.view(),
                       select_neighbors(target.view(), warped_source_index, hp.k_local, d_thresh), hp.epsilon);
}

Objective::Objective(const PointCloud& source, const PointCloud& target, const Hyperparams& hp, int threads)
    : Objective(source, target, hp, std::make_shared<SpatialIndex>(target.view()),
                make_graph(source, hp.k_rigid, threads), threads) {}

Objective::Objective(const PointCloud& source, const PointCloud& target, const Hyperparams& hp,
                     std::shared_ptr<const SpatialIndex> target_index, std::shared_ptr<const RigidityGraph> graph,
                     int threads)
    : source_(source),
      target_(target),
      hp_(hp),
      target_index_(std::move(target_index)),
      graph_(std::move(graph)),
      threads_(threads) {
    if (graph_->node_count != source_.size()) {
        throw Error(ErrorCode::LengthMismatch, "rigidity graph does not match the source cloud");
    }
}

FrozenNeighbors Objective::select(const FlowField& flow, const RigidMotion& motion, double d_thresh) const {
    FrozenNeighbors frozen;
    frozen.d_thresh = d_thresh;
    const auto warped = warp(source_, flow, motion);
    frozen.forward = select_neighbors(warped, *target_index_, hp_.k_local, d_thresh, threads_);
    if (hp_.bidirectional) {
        const SpatialIndex warped_index(warped);
        frozen.reverse = select_neighbors(target_.view(), warped_index, hp_.k_local, d_thresh, threads_);
    }
    return frozen;
}

ObjectiveEvaluation Objective::evaluate(const FlowField& flow, const RigidMotion& motion, int iter) const {
    return evaluate_frozen(flow, motion, select(flow, motion, threshold_at(iter, hp_)));
}

ObjectiveEvaluation Objective::evaluate_frozen(const FlowField& flow, const RigidMotion& motion,
                                               const FrozenNeighbors& frozen) const {
    const auto warped = warp(source_, flow, motion);
    const std::size_t n = warped.size();
    ObjectiveEvaluation ev;
    ev.d_thresh = frozen.d_thresh;

    FitTerm fwd = forward_fit(warped, target_.view(), frozen.forward, hp_.epsilon, threads_);
    ev.e_fit_forward = fwd.energy;
    ev.valid_forward = fwd.valid_count;
    std::vector<Vec3> grad_x = std::move(fwd.grad_warped);

    if (hp_.bidirectional) {
        FitTerm rev = reverse_fit(warped, target_.view(), frozen.reverse, hp_.epsilon, threads_);
        ev.e_fit_reverse = rev.energy;
        ev.valid_reverse = rev.valid_count;
        for (std::size_t i = 0; i < n; ++i) grad_x[i] += rev.grad_warped[i];
    }
    if (ev.valid_forward == 0 && (!hp_.bidirectional || ev.valid_reverse == 0)) {
        throw Error(ErrorCode::DegenerateProblem,
                    "no point has a correspondence within " + std::to_string(frozen.d_thresh) + " m");
    }

    double fit_scale = 1.0;
    if (hp_.bidirectional && hp_.fit_combine == FitCombine::Mean) {
        fit_scale = 0.5;
        for (auto& g : grad_x) g *= fit_scale;
    }
    ev.e_fit = fit_scale * (ev.e_fit_forward + ev.e_fit_reverse);
    ev.e_rigid = rigidity_energy(*graph_, flow);
    ev.e_obj = ev.e_fit + hp_.alpha_rigid * ev.e_rigid;

    const auto grad_rigid = rigidity_gradient(*graph_, flow);
    ev.grad_flow.resize(n);
    for (std::size_t i = 0; i < n; ++i) ev.grad_flow[i] = grad_x[i] + hp_.alpha_rigid * grad_rigid[i];

    // x_i depends on t with identity Jacobian and on r through d(R p_i)/dr.
    // J_i^T g = Jr^T (p_i x (R^T g)).
    const Mat3 rotation = rodrigues(motion.r);
    Vec3 moment = Vec3::Zero();
    for (std::size_t i = 0; i < n; ++i) {
        ev.grad_t += grad_x[i];
        moment += source_[i].cross(rotation.transpose() * grad_x[i]);
    }
    ev.grad_r = so3_right_jacobian(motion.r).transpose() * moment;
    return ev;
}

ObjectiveEvaluation evaluate_objective(const PointCloud& source, const PointCloud& target, const FlowField& flow,
                                       const RigidMotion& motion, const RigidityGraph& graph, const Hyperparams& hp,
                                       int iter) {
    auto shared_graph = std::make_shared<const RigidityGraph>(graph);
    const Objective objective(source, target, hp, std::make_shared<SpatialIndex>(target.view()), shared_graph);
    return objective.evaluate(flow, motion, iter);
}

}  // namespace optflow
