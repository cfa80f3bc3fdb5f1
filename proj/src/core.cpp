#include "optflow/core.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace optflow {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::EmptyCloud: return "EmptyCloud";
        case ErrorCode::NonFiniteCoordinate: return "NonFiniteCoordinate";
        case ErrorCode::InvalidHyperparam: return "InvalidHyperparam";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::DegenerateProblem: return "DegenerateProblem";
        case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
        case ErrorCode::AllDegenerate: return "AllDegenerate";
        case ErrorCode::InvalidConfig: return "InvalidConfig";
        case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

std::string_view to_string(StopReason reason) {
    switch (reason) {
        case StopReason::MaxIters: return "max-iters";
        case StopReason::EarlyStop: return "early-stop";
        case StopReason::Degenerate: return "degenerate";
    }
    return "unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

namespace {

struct ProfileRow {
    std::string_view name;
    int k_local;
    double alpha_rigid;
};

// Per-dataset values found by hyperparameter search; k_rigid stays 50 everywhere.
constexpr std::array<ProfileRow, 4> kProfiles{{
    {"flyingthings3d", 12, 14.2},
    {"nuscenes", 20, 19.6},
    {"kitti", 15, 9.57},
    {"argoverse", 15, 19.2},
}};

constexpr std::array<std::string_view, 4> kProfileNames{
    kProfiles[0].name, kProfiles[1].name, kProfiles[2].name, kProfiles[3].name};

[[noreturn]] void bad_param(std::string_view field, const std::string& why) {
    throw Error(ErrorCode::InvalidHyperparam, std::string(field) + " " + why);
}

bool positive_finite(double v) { return std::isfinite(v) && v > 0.0; }

}  // namespace

std::span<const std::string_view> profile_names() { return kProfileNames; }

Hyperparams profile_hyperparams(std::string_view name) {
    for (const auto& row : kProfiles) {
        if (row.name == name) {
            Hyperparams hp;
            hp.k_local = row.k_local;
            hp.alpha_rigid = row.alpha_rigid;
            return hp;
        }
    }
    throw Error(ErrorCode::InvalidConfig, "unknown profile '" + std::string(name) + "'");
}

void validate_hyperparams(const Hyperparams& hp) {
    if (hp.k_local < 1) bad_param("k_local", "must be >= 1");
    if (hp.k_rigid < 1) bad_param("k_rigid", "must be >= 1");
    if (!positive_finite(hp.epsilon)) bad_param("epsilon", "must be a positive real");
    if (!std::isfinite(hp.alpha_rigid) || hp.alpha_rigid < 0.0) bad_param("alpha_rigid", "must be >= 0");
    if (!positive_finite(hp.d_init)) bad_param("d_init", "must be a positive real");
    if (!positive_finite(hp.d_floor)) bad_param("d_floor", "must be a positive real");
    if (hp.d_floor > hp.d_init) bad_param("d_floor", "must not exceed d_init");
    if (hp.halving_interval < 1) bad_param("halving_interval", "must be >= 1");
    if (!positive_finite(hp.learning_rate)) bad_param("learning_rate", "must be a positive real");
    if (hp.max_iters < 1) bad_param("max_iters", "must be >= 1");
    if (hp.early_stop_patience < 1) bad_param("early_stop_patience", "must be >= 1");
    if (!positive_finite(hp.early_stop_rel_tol)) bad_param("early_stop_rel_tol", "must be a positive real");
    if (!std::isfinite(hp.weight_decay) || hp.weight_decay < 0.0) bad_param("weight_decay", "must be >= 0");
    if (hp.icp_max_iters < 0) bad_param("icp_max_iters", "must be >= 0");
    if (!positive_finite(hp.icp_rejection_dist)) bad_param("icp_rejection_dist", "must be a positive real");
}

void require_finite(std::span<const Vec3> values, std::string_view what) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!values[i].allFinite()) {
            throw Error(ErrorCode::NonFiniteCoordinate,
                        std::string(what) + " point " + std::to_string(i) + " has a non-finite coordinate");
        }
    }
}

Problem validate_problem(PointCloud source, PointCloud target, Hyperparams hp) {
    if (source.empty()) throw Error(ErrorCode::EmptyCloud, "source cloud has no points");
    if (target.empty()) throw Error(ErrorCode::EmptyCloud, "target cloud has no points");
    require_finite(source.view(), "source");
    require_finite(target.view(), "target");
    validate_hyperparams(hp);

    Problem problem{std::move(source), std::move(target), hp, {}};
    const auto n1 = static_cast<long long>(problem.source.size());
    const auto n2 = static_cast<long long>(problem.target.size());

    const long long local_cap = std::max(1LL, std::min(n1, n2) - 1);
    if (problem.hp.k_local > local_cap) {
        problem.warnings.push_back("k_local clamped from " + std::to_string(problem.hp.k_local) + " to " +
                                   std::to_string(local_cap));
        problem.hp.k_local = static_cast<int>(local_cap);
    }
    const long long rigid_cap = std::max(1LL, n1 - 1);
    if (problem.hp.k_rigid > rigid_cap) {
        problem.warnings.push_back("k_rigid clamped from " + std::to_string(problem.hp.k_rigid) + " to " +
                                   std::to_string(rigid_cap));
        problem.hp.k_rigid = static_cast<int>(rigid_cap);
    }
    return problem;
}

}  // namespace optflow
