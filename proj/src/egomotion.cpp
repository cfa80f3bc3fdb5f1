#include "optflow/egomotion.hpp"

#include "optflow/parallel.hpp"

#include <Eigen/Geometry>
#include <Eigen/SVD>

#include <cmath>

namespace optflow {

Mat3 skew(const Vec3& v) {
    Mat3 m;
    m << 0.0, -v.z(), v.y(),
         v.z(), 0.0, -v.x(),
         -v.y(), v.x(), 0.0;
    return m;
}

Mat3 rodrigues(const Vec3& r) {
    const double theta = r.norm();
    const Mat3 k = skew(r);
    if (theta < 1e-8) return Mat3::Identity() + k + 0.5 * k * k;
    const double s = std::sin(theta) / theta;
    const double half = std::sin(0.5 * theta);
    const double c = 2.0 * half * half / (theta * theta);
    return Mat3::Identity() + s * k + c * k * k;
}

Vec3 rotation_vector(const Mat3& rotation) {
    Eigen::Quaterniond q(rotation);
    if (q.w() < 0.0) q.coeffs() = -q.coeffs();
    const Vec3 v = q.vec();
    const double sin_half = v.norm();
    if (sin_half < 1e-12) return 2.0 * v / q.w();
    const double angle = 2.0 * std::atan2(sin_half, q.w());
    return angle * v / sin_half;
}

Mat3 so3_right_jacobian(const Vec3& r) {
    const double theta = r.norm();
    const Mat3 k = skew(r);
    double a = 0.0;
    double b = 0.0;
    if (theta < 1e-3) {
        const double t2 = theta * theta;
        a = 0.5 - t2 / 24.0;
        b = 1.0 / 6.0 - t2 / 120.0;
    } else {
        const double half = std::sin(0.5 * theta);
        a = 2.0 * half * half / (theta * theta);
        b = (theta - std::sin(theta)) / (theta * theta * theta);
    }
    return Mat3::Identity() - a * k + b * k * k;
}

Mat3 rotation_jacobian(const Vec3& r, const Vec3& p) {
    return -rodrigues(r) * skew(p) * so3_right_jacobian(r);
}

Vec3 apply_rigid(const RigidMotion& motion, const Vec3& p) { return rodrigues(motion.r) * p + motion.t; }

PointCloud apply_rigid(const RigidMotion& motion, const PointCloud& cloud) {
    const Mat3 rotation = rodrigues(motion.r);
    PointCloud out;
    out.points.reserve(cloud.size());
    for (const auto& p : cloud.points) out.points.push_back(apply(motion, rotation, p));
    return out;
}

RigidMotion compose(const RigidMotion& a, const RigidMotion& b) {
    const Mat3 rb = rodrigues(b.r);
    return {rotation_vector(rb * rodrigues(a.r)), rb * a.t + b.t};
}

double rotation_angle(const RigidMotion& motion) { return motion.r.norm(); }

RigidMotion kabsch(std::span<const Vec3> from, std::span<const Vec3> to) {
    const auto n = static_cast<double>(from.size());
    Vec3 ca = Vec3::Zero();
    Vec3 cb = Vec3::Zero();
    for (std::size_t i = 0; i < from.size(); ++i) {
        ca += from[i];
        cb += to[i];
    }
    ca /= n;
    cb /= n;
    Mat3 h = Mat3::Zero();
    for (std::size_t i = 0; i < from.size(); ++i) h += (from[i] - ca) * (to[i] - cb).transpose();
    Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 d = Mat3::Identity();
    d(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
    const Mat3 rotation = svd.matrixV() * d * svd.matrixU().transpose();
    return {rotation_vector(rotation), cb - rotation * ca};
}

IcpResult icp_register(const PointCloud& source, const PointCloud& target, const IcpOptions& options) {
    if (source.empty()) throw Error(ErrorCode::EmptyCloud, "ICP source cloud has no points");
    if (target.empty()) throw Error(ErrorCode::EmptyCloud, "ICP target cloud has no points");
    return icp_register(source, SpatialIndex(target.view()), options);
}

IcpResult icp_register(const PointCloud& source, const SpatialIndex& target_index, const IcpOptions& options,
                       int threads) {
    if (source.empty()) throw Error(ErrorCode::EmptyCloud, "ICP source cloud has no points");
    IcpResult result;
    const std::size_t n = source.size();
    std::vector<Vec3> moved(n);
    std::vector<std::uint32_t> match(n);
    std::vector<std::uint8_t> accepted(n);

    for (int iter = 0; iter < options.max_iters; ++iter) {
        const Mat3 rotation = rodrigues(result.motion.r);
        parallel_for(n, threads, [&](std::size_t begin, std::size_t end) {
            std::vector<Neighbor> nn;
            for (std::size_t i = begin; i < end; ++i) {
                moved[i] = apply(result.motion, rotation, source[i]);
                target_index.query(moved[i], 1, options.rejection_dist, nn);
                accepted[i] = nn.empty() ? 0 : 1;
                if (!nn.empty()) match[i] = nn.front().index;
            }
        });
        std::vector<Vec3> from;
        std::vector<Vec3> to;
        double sq = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (!accepted[i]) continue;
            from.push_back(moved[i]);
            to.push_back(target_index.point(match[i]));
            sq += squared_distance(moved[i], to.back());
        }
        if (from.size() < 3) {
            result.warnings.push_back("ICP: only " + std::to_string(from.size()) +
                                      " pairs within rejection distance; using identity");
            result.motion = RigidMotion::identity();
            result.converged = false;
            return result;
        }
        result.mse_trace.push_back(sq / static_cast<double>(from.size()));
        const RigidMotion step = kabsch(from, to);
        result.motion = compose(result.motion, step);
        result.iterations = iter + 1;
        if (rotation_angle(step) < options.min_rotation_step && step.t.norm() < options.min_translation_step) {
            result.converged = true;
            break;
        }
    }
    return result;
}

}  // namespace optflow
