#include "optflow/eval.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace optflow {

namespace {

constexpr double kTinyNorm = 1e-12;

void check_lengths(const FlowField& a, const FlowField& b, std::string_view what) {
    if (a.size() != b.size()) {
        throw Error(ErrorCode::LengthMismatch, std::string(what) + ": " + std::to_string(a.size()) + " vs " +
                                                   std::to_string(b.size()) + " vectors");
    }
}

double mean_of(double total, std::size_t n) { return n == 0 ? 0.0 : total / static_cast<double>(n); }

}  // namespace

double epe(const FlowField& est, const FlowField& gt) {
    check_lengths(est, gt, "epe");
    double total = 0.0;
    for (std::size_t i = 0; i < est.size(); ++i) total += (est[i] - gt[i]).norm();
    return mean_of(total, est.size());
}

double accuracy(const FlowField& est, const FlowField& gt, double abs_thresh, double rel_thresh) {
    check_lengths(est, gt, "accuracy");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < est.size(); ++i) {
        const double err = (est[i] - gt[i]).norm();
        const double mag = gt[i].norm();
        if (err < abs_thresh || (mag >= kTinyNorm && err / mag < rel_thresh)) ++hits;
    }
    return mean_of(static_cast<double>(hits), est.size());
}

AngleError angle_error(const FlowField& est, const FlowField& gt) {
    check_lengths(est, gt, "angle_error");
    AngleError out;
    double total = 0.0;
    std::size_t used = 0;
    for (std::size_t i = 0; i < est.size(); ++i) {
        const double ne = est[i].norm();
        const double ng = gt[i].norm();
        if (ne < kTinyNorm || ng < kTinyNorm) {
            ++out.skipped;
            continue;
        }
        // atan2 stays accurate near 0 and pi, where acos of a rounded cosine does not.
        total += std::atan2(est[i].cross(gt[i]).norm(), est[i].dot(gt[i]));
        ++used;
    }
    if (used == 0) throw Error(ErrorCode::AllDegenerate, "every flow pair has a zero-length vector");
    out.mean = total / static_cast<double>(used);
    return out;
}

double outlier_frac(const FlowField& est, const FlowField& gt, double thresh) {
    check_lengths(est, gt, "outlier_frac");
    std::size_t count = 0;
    for (std::size_t i = 0; i < est.size(); ++i) {
        if ((est[i] - gt[i]).norm() >= thresh) ++count;
    }
    return mean_of(static_cast<double>(count), est.size());
}

double eped(const FlowField& flow_full, const FlowField& flow_warm) { return epe(flow_warm, flow_full); }

MetricsReport compute_metrics(const FlowField& est, const FlowField& gt) {
    MetricsReport report;
    report.epe = epe(est, gt);
    report.acc_strict = accuracy(est, gt, 0.05, 0.05);
    report.acc_relax = accuracy(est, gt, 0.10, 0.10);
    report.outlier_frac = outlier_frac(est, gt, 0.3);
    report.n_points = est.size();
    try {
        const AngleError angle = angle_error(est, gt);
        report.angle_error = angle.mean;
        report.skipped_angle_pairs = angle.skipped;
    } catch (const Error& e) {
        if (e.code() != ErrorCode::AllDegenerate) throw;
        report.angle_error = 0.0;
        report.skipped_angle_pairs = est.size();
    }
    return report;
}

std::vector<std::uint8_t> classify_dynamic(const FlowField& flow, const RigidMotion& /*motion*/,
                                           const PointCloud& source, double speed_thresh) {
    if (flow.size() != source.size()) {
        throw Error(ErrorCode::LengthMismatch, "classify_dynamic: " + std::to_string(flow.size()) +
                                                   " flow vectors for " + std::to_string(source.size()) +
                                                   " points");
    }
    // (R p + t + f) - (R p + t) = f: the ego-motion cancels out of the residual.
    std::vector<std::uint8_t> mask(flow.size(), 0);
    for (std::size_t i = 0; i < flow.size(); ++i) mask[i] = flow[i].norm() > speed_thresh ? 1 : 0;
    return mask;
}

}  // namespace optflow
