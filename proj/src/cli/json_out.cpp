#include "optflow/cli/json_out.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>

namespace optflow::cli {

double round6(double value) {
    if (!std::isfinite(value)) return value;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", value);
    const double rounded = std::strtod(buf, nullptr);
    return rounded == 0.0 ? 0.0 : rounded;  // no "-0.0"
}

namespace {

Json vec(const Vec3& v) { return Json::array({round6(v.x()), round6(v.y()), round6(v.z())}); }

}  // namespace

Json to_json(const MetricsReport& r) {
    Json j;
    j["epe"] = round6(r.epe);
    j["acc_strict"] = round6(r.acc_strict);
    j["acc_relax"] = round6(r.acc_relax);
    j["angle_error"] = round6(r.angle_error);
    j["outlier_frac"] = round6(r.outlier_frac);
    j["n_points"] = r.n_points;
    j["skipped_angle_pairs"] = r.skipped_angle_pairs;
    return j;
}

Json to_json(const RigidMotion& m) {
    Json j;
    j["r"] = vec(m.r);
    j["t"] = vec(m.t);
    return j;
}

Json to_json(const Hyperparams& hp) {
    Json j;
    j["k_local"] = hp.k_local;
    j["k_rigid"] = hp.k_rigid;
    j["epsilon"] = round6(hp.epsilon);
    j["alpha_rigid"] = round6(hp.alpha_rigid);
    j["d_init"] = round6(hp.d_init);
    j["d_floor"] = round6(hp.d_floor);
    j["halving_interval"] = hp.halving_interval;
    j["learning_rate"] = round6(hp.learning_rate);
    j["max_iters"] = hp.max_iters;
    j["early_stop_patience"] = hp.early_stop_patience;
    j["early_stop_rel_tol"] = round6(hp.early_stop_rel_tol);
    j["bidirectional"] = hp.bidirectional;
    j["seed"] = hp.seed;
    j["fit_combine"] = hp.fit_combine == FitCombine::Sum ? "sum" : "mean";
    j["weight_decay"] = round6(hp.weight_decay);
    j["ego_motion"] = hp.ego_motion;
    j["icp_max_iters"] = hp.icp_max_iters;
    j["icp_rejection_dist"] = round6(hp.icp_rejection_dist);
    return j;
}

Json to_json(const Diagnostics& d) {
    Json j;
    j["stop_reason"] = std::string(to_string(d.stop_reason));
    j["iterations"] = d.trace.size();
    j["best_iteration"] = d.best_iteration;
    j["best_e_obj"] = round6(d.best_e_obj);
    j["wall_seconds"] = round6(d.wall_seconds);
    j["icp_seconds"] = round6(d.icp_seconds);
    j["warnings"] = d.warnings;
    Json trace = Json::array();
    for (const auto& rec : d.trace) {
        Json row;
        row["iteration"] = rec.iteration;
        row["e_fit"] = round6(rec.e_fit);
        row["e_rigid"] = round6(rec.e_rigid);
        row["e_obj"] = round6(rec.e_obj);
        row["d_thresh"] = round6(rec.d_thresh);
        row["valid_forward"] = rec.valid_forward;
        row["valid_reverse"] = rec.valid_reverse;
        trace.push_back(std::move(row));
    }
    j["trace"] = std::move(trace);
    return j;
}

std::string dump(const Json& doc) { return doc.dump(2) + "\n"; }

void write_json(const std::filesystem::path& path, const Json& doc) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, path.string() + ": cannot open for writing");
    out << dump(doc);
    out.close();
    if (!out) throw Error(ErrorCode::Io, path.string() + ": write failed");
}

}  // namespace optflow::cli
