#include "optflow/optimizer.hpp"

#include "optflow/correspondence.hpp"
#include "optflow/egomotion.hpp"
#include "optflow/objective.hpp"
#include "optflow/random.hpp"
#include "optflow/rigidity.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

namespace optflow {

AdamState::AdamState(std::size_t size, AdamConfig config, std::size_t decayed_count)
    : config_(config), decayed_count_(std::min(decayed_count, size)), m_(size, 0.0), v_(size, 0.0) {}

void AdamState::step(std::span<double> params, std::span<const double> grads, double learning_rate) {
    if (params.size() != m_.size() || grads.size() != m_.size()) {
        throw Error(ErrorCode::LengthMismatch, "Adam state holds " + std::to_string(m_.size()) +
                                                   " parameters, got " + std::to_string(params.size()) +
                                                   " params and " + std::to_string(grads.size()) + " gradients");
    }
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (!std::isfinite(grads[i])) {
            throw Error(ErrorCode::NonFiniteGradient, "gradient entry " + std::to_string(i) + " is not finite");
        }
    }
    ++steps_;
    const double bias1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
    const double bias2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
    const double decay = 1.0 - learning_rate * config_.weight_decay;
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (i < decayed_count_) params[i] *= decay;
        m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * grads[i];
        v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * grads[i] * grads[i];
        const double m_hat = m_[i] / bias1;
        const double v_hat = v_[i] / bias2;
        params[i] -= learning_rate * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
}

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads, double learning_rate) {
    state.step(params, grads, learning_rate);
}

FlowField scene_flow(const PointCloud& source, const FlowField& flow, const RigidMotion& motion) {
    const auto warped = warp(source, flow, motion);
    FlowField out = FlowField::zeros(source.size());
    for (std::size_t i = 0; i < source.size(); ++i) out[i] = warped[i] - source[i];
    return out;
}

FlowField scene_flow(const PointCloud& source, const FlowEstimate& estimate) {
    return scene_flow(source, estimate.flow, estimate.motion);
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

// Parameter layout: flow (3n) | r (3) | t (3).
void pack(const FlowField& flow, const RigidMotion& motion, std::vector<double>& params) {
    const std::size_t n = flow.size();
    params.resize(3 * n + 6);
    for (std::size_t i = 0; i < n; ++i) {
        for (int c = 0; c < 3; ++c) params[3 * i + c] = flow[i][c];
    }
    for (int c = 0; c < 3; ++c) {
        params[3 * n + c] = motion.r[c];
        params[3 * n + 3 + c] = motion.t[c];
    }
}

void unpack(const std::vector<double>& params, FlowField& flow, RigidMotion& motion) {
    const std::size_t n = flow.size();
    for (std::size_t i = 0; i < n; ++i) {
        for (int c = 0; c < 3; ++c) flow[i][c] = params[3 * i + c];
    }
    for (int c = 0; c < 3; ++c) {
        motion.r[c] = params[3 * n + c];
        motion.t[c] = params[3 * n + 3 + c];
    }
}

}  // namespace

FlowEstimate optimize_pair(const PointCloud& source, const PointCloud& target, const Hyperparams& hp,
                           const ExecOptions& exec) {
    if (target.empty()) throw Error(ErrorCode::EmptyCloud, "target cloud has no points");
    return optimize_pair(source, target, std::make_shared<SpatialIndex>(target.view()), hp, exec);
}

FlowEstimate optimize_pair(const PointCloud& source, const PointCloud& target,
                           std::shared_ptr<const SpatialIndex> target_index, const Hyperparams& hp,
                           const ExecOptions& exec, const WarmStart* warm) {
    const auto start = Clock::now();
    const Problem problem = validate_problem(source, target, hp);
    const Hyperparams& p = problem.hp;
    const std::size_t n = problem.source.size();

    FlowEstimate est;
    est.diagnostics.warnings = problem.warnings;
    est.flow = FlowField::zeros(n);

    int iterations = p.max_iters;
    int iter_offset = 0;
    if (warm != nullptr) {
        if (warm->flow.size() != n) {
            throw Error(ErrorCode::LengthMismatch, "warm-start flow does not match the source cloud");
        }
        est.flow = warm->flow;
        est.motion = p.ego_motion ? warm->motion : RigidMotion::identity();
        iterations = warm->iterations;
        // A warm state is already near convergence; start on the tightest threshold.
        iter_offset = threshold_floor_iteration(p);
    } else if (p.ego_motion) {
        const auto icp_start = Clock::now();
        IcpOptions icp;
        icp.max_iters = p.icp_max_iters;
        icp.rejection_dist = p.icp_rejection_dist;
        const IcpResult reg = icp_register(problem.source, *target_index, icp, exec.threads);
        est.motion = reg.motion;
        est.diagnostics.warnings.insert(est.diagnostics.warnings.end(), reg.warnings.begin(), reg.warnings.end());
        est.diagnostics.icp_seconds = seconds_since(icp_start);
    }

    std::shared_ptr<const RigidityGraph> graph;
    if (n >= 2) {
        graph = std::make_shared<RigidityGraph>(build_rigidity_graph(problem.source, p.k_rigid, exec.threads));
    } else {
        auto empty = std::make_shared<RigidityGraph>();
        empty->node_count = n;
        graph = empty;
    }
    const Objective objective(problem.source, problem.target, p, target_index, graph, exec.threads);

    AdamConfig adam_config;
    adam_config.weight_decay = p.weight_decay;
    AdamState adam(3 * n + 6, adam_config, 3 * n);
    std::vector<double> params;
    std::vector<double> grads(3 * n + 6, 0.0);
    pack(est.flow, est.motion, params);

    FlowField flow = est.flow;
    RigidMotion motion = est.motion;
    double best = std::numeric_limits<double>::infinity();
    const int floor_iteration = threshold_floor_iteration(p);
    double stall_reference = std::numeric_limits<double>::infinity();
    int stalled = 0;
    est.diagnostics.stop_reason = StopReason::MaxIters;

    for (int it = 0; it < iterations; ++it) {
        const int iter = iter_offset + it;
        ObjectiveEvaluation ev;
        try {
            ev = objective.evaluate(flow, motion, iter);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::DegenerateProblem) throw;
            est.diagnostics.warnings.push_back(std::string("stopped at iteration ") + std::to_string(iter) + ": " +
                                               e.what());
            est.diagnostics.stop_reason = StopReason::Degenerate;
            break;
        }
        est.diagnostics.trace.push_back(
            {iter, ev.e_fit, ev.e_rigid, ev.e_obj, ev.d_thresh, ev.valid_forward, ev.valid_reverse});
        if (ev.e_obj < best) {
            best = ev.e_obj;
            est.flow = flow;
            est.motion = motion;
            est.diagnostics.best_iteration = iter;
            est.diagnostics.best_e_obj = ev.e_obj;
        }
        // The objective keeps changing while the threshold shrinks, so stalls
        // are only counted once the schedule has settled.
        if (iter >= floor_iteration) {
            if (ev.e_obj < stall_reference * (1.0 - p.early_stop_rel_tol)) {
                stall_reference = ev.e_obj;
                stalled = 0;
            } else if (++stalled >= p.early_stop_patience) {
                est.diagnostics.stop_reason = StopReason::EarlyStop;
                break;
            }
        }
        if (it + 1 == iterations) break;

        for (std::size_t i = 0; i < n; ++i) {
            for (int c = 0; c < 3; ++c) grads[3 * i + c] = ev.grad_flow[i][c];
        }
        for (int c = 0; c < 3; ++c) {
            grads[3 * n + c] = p.ego_motion ? ev.grad_r[c] : 0.0;
            grads[3 * n + 3 + c] = p.ego_motion ? ev.grad_t[c] : 0.0;
        }
        adam.step(params, grads, p.learning_rate);
        unpack(params, flow, motion);
    }
    if (est.diagnostics.trace.empty()) {
        est.diagnostics.warnings.push_back("no valid correspondences; returning the initial estimate");
    }
    est.diagnostics.wall_seconds = seconds_since(start);
    return est;
}

FlowField transfer_flow(const PointCloud& previous_source, const FlowEstimate& previous, const PointCloud& cloud) {
    const auto landed = warp(previous_source, previous.flow, previous.motion);
    const SpatialIndex index(landed);
    FlowField out = FlowField::zeros(cloud.size());
    std::vector<Neighbor> nn;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        index.query(cloud[i], 1, kUnbounded, nn);
        out[i] = previous.flow[nn.front().index];
    }
    return out;
}

std::vector<FlowEstimate> optimize_sequence(std::span<const PointCloud> clouds, const Hyperparams& hp,
                                            int warm_iters, const ExecOptions& exec) {
    if (clouds.size() < 2) throw Error(ErrorCode::InvalidConfig, "a sequence needs at least two clouds");
    if (warm_iters < 1) throw Error(ErrorCode::InvalidHyperparam, "warm_iters must be >= 1");
    std::vector<FlowEstimate> out;
    out.reserve(clouds.size() - 1);
    out.push_back(optimize_pair(clouds[0], clouds[1], hp, exec));
    for (std::size_t k = 1; k + 1 < clouds.size(); ++k) {
        const auto start = Clock::now();
        if (clouds[k + 1].empty()) throw Error(ErrorCode::EmptyCloud, "sequence cloud " + std::to_string(k + 1));
        WarmStart warm{transfer_flow(clouds[k - 1], out.back(), clouds[k]), out.back().motion, warm_iters};
        auto index = std::make_shared<SpatialIndex>(clouds[k + 1].view());
        FlowEstimate est = optimize_pair(clouds[k], clouds[k + 1], index, hp, exec, &warm);
        est.diagnostics.wall_seconds = seconds_since(start);
        out.push_back(std::move(est));
    }
    return out;
}

std::vector<std::vector<std::uint32_t>> partition_chunks(std::size_t n, std::size_t chunk_size,
                                                         std::uint64_t seed) {
    if (chunk_size == 0) throw Error(ErrorCode::InvalidConfig, "chunk_size must be positive");
    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    Rng rng(seed);
    rng.shuffle(order);
    const std::size_t count = (n + chunk_size - 1) / chunk_size;
    std::vector<std::vector<std::uint32_t>> chunks(count);
    for (std::size_t c = 0; c < count; ++c) {
        const std::size_t begin = c * n / count;
        const std::size_t end = (c + 1) * n / count;
        chunks[c].assign(order.begin() + static_cast<std::ptrdiff_t>(begin),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
        std::sort(chunks[c].begin(), chunks[c].end());
    }
    return chunks;
}

FlowEstimate optimize_batched(const PointCloud& source, const PointCloud& target, const Hyperparams& hp,
                              std::size_t chunk_size, const ExecOptions& exec) {
    if (source.size() <= chunk_size) return optimize_pair(source, target, hp, exec);
    if (target.empty()) throw Error(ErrorCode::EmptyCloud, "target cloud has no points");
    const auto start = Clock::now();
    const auto chunks = partition_chunks(source.size(), chunk_size, hp.seed);
    auto index = std::make_shared<const SpatialIndex>(target.view());

    std::vector<PointCloud> parts(chunks.size());
    for (std::size_t c = 0; c < chunks.size(); ++c) {
        parts[c].points.reserve(chunks[c].size());
        for (auto i : chunks[c]) parts[c].points.push_back(source[i]);
    }
    std::vector<FlowEstimate> results(chunks.size());
    std::vector<std::exception_ptr> errors(chunks.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t c = next++; c < chunks.size(); c = next++) {
            try {
                results[c] = optimize_pair(parts[c], target, index, hp, ExecOptions{1});
            } catch (...) {
                errors[c] = std::current_exception();
            }
        }
    };
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(exec.threads, 1)),
                                                      chunks.size());
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }

    std::size_t largest = 0;
    for (std::size_t c = 1; c < chunks.size(); ++c) {
        if (chunks[c].size() > chunks[largest].size()) largest = c;
    }
    FlowEstimate out;
    out.motion = results[largest].motion;
    out.diagnostics = results[largest].diagnostics;
    out.flow = FlowField::zeros(source.size());
    // Re-express every chunk's flow against the reported motion so the total
    // displacement of each point is unchanged.
    const Mat3 reported = rodrigues(out.motion.r);
    for (std::size_t c = 0; c < chunks.size(); ++c) {
        const Mat3 own = rodrigues(results[c].motion.r);
        for (std::size_t k = 0; k < chunks[c].size(); ++k) {
            const Vec3& p = source[chunks[c][k]];
            const Vec3 landed = apply(results[c].motion, own, p) + results[c].flow[k];
            out.flow[chunks[c][k]] = landed - apply(out.motion, reported, p);
        }
        if (c != largest) {
            for (const auto& w : results[c].diagnostics.warnings) {
                out.diagnostics.warnings.push_back("chunk " + std::to_string(c) + ": " + w);
            }
        }
    }
    out.diagnostics.wall_seconds = seconds_since(start);
    return out;
}

}  // namespace optflow
