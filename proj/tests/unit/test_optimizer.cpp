#include "optflow/optimizer.hpp"

#include "optflow/correspondence.hpp"
#include "optflow/eval.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

using namespace optflow;

namespace {

// Textbook AdamW recurrence for one scalar, written out independently.
struct ScalarAdam {
    long double m = 0, v = 0;
    int t = 0;
    long double step(long double x, long double g, long double lr, long double wd) {
        ++t;
        x *= 1 - lr * wd;
        m = 0.9L * m + 0.1L * g;
        v = 0.999L * v + 0.001L * g * g;
        const long double mh = m / (1 - std::pow(0.9L, t));
        const long double vh = v / (1 - std::pow(0.999L, t));
        return x - lr * mh / (std::sqrt(vh) + 1e-8L);
    }
};

double max_norm(const FlowField& f) {
    double out = 0.0;
    for (const auto& v : f.vectors) out = std::max(out, v.norm());
    return out;
}

SyntheticScene small_scene(const char* preset, std::size_t n, std::uint64_t seed) {
    SceneConfig cfg = scene_preset(preset);
    cfg.source_points = n;
    return gen_scene(cfg, seed);
}

}  // namespace

TEST(Adam, ZeroGradientWithoutDecayLeavesParams) {
    AdamState state(3, AdamConfig{});
    std::vector<double> x{1.0, -2.0, 3.0};
    const std::vector<double> g(3, 0.0);
    for (int i = 0; i < 10; ++i) adam_step(state, x, g, 4e-3);
    EXPECT_EQ(x, (std::vector<double>{1.0, -2.0, 3.0}));
    EXPECT_EQ(state.steps(), 10);
}

TEST(Adam, FirstStepMovesAboutLearningRateAgainstGradient) {
    for (double g : {1e-3, 0.5, -7.0, 1e6}) {
        AdamState state(1, AdamConfig{});
        std::vector<double> x{0.25};
        adam_step(state, x, std::vector<double>{g}, 4e-3);
        const double delta = x[0] - 0.25;
        EXPECT_LE(std::abs(delta), 4e-3 + 1e-9);
        EXPECT_EQ(std::signbit(delta), !std::signbit(g));
    }
}

TEST(Adam, QuadraticBowlConverges) {
    AdamState state(1, AdamConfig{});
    std::vector<double> x{1.0};
    ScalarAdam ref;
    long double rx = 1.0L;
    for (int i = 0; i < 600; ++i) {
        const double g = 2.0 * x[0];
        rx = ref.step(rx, 2.0L * rx, 4e-3L, 0.0L);
        adam_step(state, x, std::vector<double>{g}, 4e-3);
        ASSERT_NEAR(x[0], static_cast<double>(rx), 1e-12);
    }
    EXPECT_LT(std::abs(x[0]), 0.05);
}

TEST(Adam, DecayTouchesOnlyLeadingParams) {
    AdamConfig cfg;
    cfg.weight_decay = 0.5;
    AdamState state(4, cfg, 2);
    std::vector<double> x{1.0, 1.0, 1.0, 1.0};
    adam_step(state, x, std::vector<double>(4, 0.0), 0.1);
    EXPECT_DOUBLE_EQ(x[0], 0.95);
    EXPECT_DOUBLE_EQ(x[1], 0.95);
    EXPECT_EQ(x[2], 1.0);
    EXPECT_EQ(x[3], 1.0);

    ScalarAdam ref;
    AdamState one(1, cfg, 1);
    std::vector<double> y{0.7};
    long double ry = 0.7L;
    for (int i = 0; i < 50; ++i) {
        const double g = std::sin(i * 0.3);
        ry = ref.step(ry, g, 0.01L, 0.5L);
        adam_step(one, y, std::vector<double>{g}, 0.01);
    }
    EXPECT_NEAR(y[0], static_cast<double>(ry), 1e-12);
}

TEST(Adam, BadGradientsLeaveStateUntouched) {
    AdamState state(2, AdamConfig{});
    std::vector<double> x{1.0, 2.0};
    try {
        adam_step(state, x, std::vector<double>{0.1, std::numeric_limits<double>::infinity()}, 0.1);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NonFiniteGradient);
    }
    EXPECT_EQ(x, (std::vector<double>{1.0, 2.0}));
    EXPECT_EQ(state.steps(), 0);
    EXPECT_EQ(state.first_moment()[0], 0.0);
    try {
        adam_step(state, x, std::vector<double>{0.1}, 0.1);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::LengthMismatch);
    }
}

TEST(OptimizePair, IdenticalCloudsStayPut) {
    const auto scene = small_scene("static_world", 2048, 3);
    const auto est = optimize_pair(scene.source, scene.source, profile_hyperparams("kitti"));
    EXPECT_LE(max_norm(scene_flow(scene.source, est)), 1e-3);
    EXPECT_LT(est.motion.r.norm(), 1e-4);
    EXPECT_LT(est.motion.t.norm(), 1e-3);
}

TEST(OptimizePair, RecoversSingleMovingObject) {
    SceneConfig cfg = scene_preset("ego_plus_objects");
    cfg.object_count = 1;
    cfg.ego_yaw_deg = 0.0;
    cfg.ego_translation = Vec3::Zero();
    const auto scene = gen_scene(cfg, 4);
    const auto est = optimize_pair(scene.source, scene.target, profile_hyperparams("kitti"));
    EXPECT_LE(epe(scene_flow(scene.source, est), scene.gt_flow), 0.02);
}

TEST(OptimizePair, TraceInvariants) {
    const auto scene = small_scene("ego_plus_objects", 1024, 5);
    const Hyperparams hp = profile_hyperparams("kitti");
    const auto est = optimize_pair(scene.source, scene.target, hp);
    const auto& d = est.diagnostics;
    ASSERT_FALSE(d.trace.empty());
    EXPECT_LE(d.trace.size(), static_cast<std::size_t>(hp.max_iters));
    if (d.stop_reason == StopReason::MaxIters) EXPECT_EQ(d.trace.size(), static_cast<std::size_t>(hp.max_iters));
    if (d.stop_reason == StopReason::EarlyStop) EXPECT_LT(d.trace.size(), static_cast<std::size_t>(hp.max_iters));
    for (std::size_t k = 0; k < d.trace.size(); ++k) {
        const auto& r = d.trace[k];
        EXPECT_EQ(r.iteration, static_cast<int>(k));
        EXPECT_EQ(r.d_thresh, threshold_at(r.iteration, hp));
        EXPECT_NEAR(r.e_obj, r.e_fit + hp.alpha_rigid * r.e_rigid, 1e-9 * r.e_obj);
        EXPECT_LE(d.best_e_obj, r.e_obj);
    }
    EXPECT_EQ(d.trace[static_cast<std::size_t>(d.best_iteration)].e_obj, d.best_e_obj);
    EXPECT_EQ(est.flow.size(), scene.source.size());
}

TEST(OptimizePair, ThresholdTraceFollowsSchedule) {
    const auto scene = small_scene("ego_only", 512, 6);
    Hyperparams hp = profile_hyperparams("kitti");
    hp.max_iters = 450;
    hp.early_stop_patience = 1000;
    const auto est = optimize_pair(scene.source, scene.target, hp);
    ASSERT_EQ(est.diagnostics.trace.size(), 450u);
    const double expect[] = {2.0, 1.0, 0.5, 0.25, 0.2};
    for (const auto& r : est.diagnostics.trace) EXPECT_EQ(r.d_thresh, expect[std::min(r.iteration / 100, 4)]);
}

TEST(OptimizePair, EarlyStopWaitsForThresholdFloor) {
    const auto scene = small_scene("static_world", 512, 7);
    const auto est = optimize_pair(scene.source, scene.source, profile_hyperparams("kitti"));
    if (est.diagnostics.stop_reason == StopReason::EarlyStop) {
        EXPECT_GE(est.diagnostics.trace.size(), 400u + 30u);
    }
}

TEST(OptimizePair, RunsAreBitStable) {
    const auto scene = small_scene("ego_plus_objects", 800, 8);
    Hyperparams hp = profile_hyperparams("kitti");
    hp.max_iters = 150;
    const auto a = optimize_pair(scene.source, scene.target, hp, ExecOptions{1});
    const auto b = optimize_pair(scene.source, scene.target, hp, ExecOptions{1});
    const auto c = optimize_pair(scene.source, scene.target, hp, ExecOptions{3});
    ASSERT_EQ(a.diagnostics.trace.size(), b.diagnostics.trace.size());
    ASSERT_EQ(a.diagnostics.trace.size(), c.diagnostics.trace.size());
    for (std::size_t k = 0; k < a.diagnostics.trace.size(); ++k) {
        EXPECT_EQ(a.diagnostics.trace[k].e_obj, b.diagnostics.trace[k].e_obj);
        EXPECT_EQ(a.diagnostics.trace[k].e_obj, c.diagnostics.trace[k].e_obj);
    }
    EXPECT_EQ(a.flow.vectors, c.flow.vectors);
}

TEST(OptimizePair, WithoutEgoMotionKeepsIdentity) {
    const auto scene = small_scene("ego_only", 512, 9);
    Hyperparams hp = profile_hyperparams("kitti");
    hp.ego_motion = false;
    hp.max_iters = 50;
    const auto est = optimize_pair(scene.source, scene.target, hp);
    EXPECT_EQ(est.motion.r, Vec3::Zero());
    EXPECT_EQ(est.motion.t, Vec3::Zero());
    EXPECT_EQ(est.diagnostics.icp_seconds, 0.0);
}

TEST(OptimizePair, NoOverlapEndsWithWarning) {
    const PointCloud source({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)});
    const PointCloud target({Vec3(500, 0, 0), Vec3(501, 0, 0), Vec3(500, 1, 0)});
    const auto est = optimize_pair(source, target, Hyperparams{});
    EXPECT_EQ(est.diagnostics.stop_reason, StopReason::Degenerate);
    EXPECT_FALSE(est.diagnostics.warnings.empty());
    EXPECT_EQ(est.flow.size(), 3u);
}

TEST(OptimizePair, InvalidInputsThrow) {
    const PointCloud ok({Vec3(0, 0, 0), Vec3(1, 0, 0)});
    Hyperparams bad;
    bad.learning_rate = -1.0;
    EXPECT_THROW(optimize_pair(ok, ok, bad), Error);
    EXPECT_THROW(optimize_pair(PointCloud{}, ok, Hyperparams{}), Error);
    EXPECT_THROW(optimize_pair(ok, PointCloud{}, Hyperparams{}), Error);
}

TEST(Sequence, IdenticalCloudsGiveZeroFlow) {
    const auto scene = small_scene("static_world", 512, 10);
    const std::vector<PointCloud> clouds(4, scene.source);
    const auto out = optimize_sequence(clouds, profile_hyperparams("kitti"), 30);
    ASSERT_EQ(out.size(), 3u);
    for (std::size_t k = 0; k < out.size(); ++k) EXPECT_LE(max_norm(scene_flow(clouds[k], out[k])), 1e-3);
    EXPECT_EQ(out[1].diagnostics.trace.size(), 30u);
    EXPECT_EQ(out[1].diagnostics.trace.front().d_thresh, 0.2);
}

TEST(Sequence, NeedsTwoClouds) {
    const std::vector<PointCloud> one(1, PointCloud({Vec3::Zero()}));
    EXPECT_THROW(optimize_sequence(one, Hyperparams{}), Error);
}

TEST(TransferFlow, CopiesNearestLandedFlow) {
    const PointCloud prev({Vec3(0, 0, 0), Vec3(10, 0, 0)});
    FlowEstimate est;
    est.flow = FlowField({Vec3(1, 0, 0), Vec3(0, 2, 0)});
    const PointCloud next({Vec3(1.1, 0, 0), Vec3(10, 1.9, 0)});
    const auto moved = transfer_flow(prev, est, next);
    EXPECT_EQ(moved[0], Vec3(1, 0, 0));
    EXPECT_EQ(moved[1], Vec3(0, 2, 0));
}

TEST(Partition, CoversEveryIndexOnce) {
    for (std::size_t n : {1u, 100u, 8192u, 20000u}) {
        const auto chunks = partition_chunks(n, 8192, 42);
        std::vector<int> hits(n, 0);
        for (const auto& c : chunks) {
            EXPECT_LE(c.size(), 8192u);
            EXPECT_TRUE(std::is_sorted(c.begin(), c.end()));
            for (auto i : c) ++hits[i];
        }
        EXPECT_TRUE(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
        EXPECT_EQ(chunks, partition_chunks(n, 8192, 42));
    }
    EXPECT_NE(partition_chunks(1000, 300, 1), partition_chunks(1000, 300, 2));
}

TEST(Batched, SmallCloudMatchesSinglePair) {
    const auto scene = small_scene("ego_only", 600, 11);
    Hyperparams hp = profile_hyperparams("kitti");
    hp.max_iters = 80;
    const auto a = optimize_pair(scene.source, scene.target, hp);
    const auto b = optimize_batched(scene.source, scene.target, hp, 8192);
    EXPECT_EQ(a.flow.vectors, b.flow.vectors);
    EXPECT_EQ(a.motion.r, b.motion.r);
    EXPECT_EQ(a.motion.t, b.motion.t);
}

TEST(Batched, ChunkedRunKeepsAccuracyAndThreadIndependence) {
    const auto scene = small_scene("ego_only", 1500, 12);
    const Hyperparams hp = profile_hyperparams("kitti");
    const auto one = optimize_batched(scene.source, scene.target, hp, 512, ExecOptions{1});
    const auto four = optimize_batched(scene.source, scene.target, hp, 512, ExecOptions{4});
    EXPECT_EQ(one.flow.vectors, four.flow.vectors);
    EXPECT_LE(epe(scene_flow(scene.source, one), scene.gt_flow), 0.05);
}
