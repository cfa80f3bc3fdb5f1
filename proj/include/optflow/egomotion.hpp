#pragma once

#include "optflow/core.hpp"
#include "optflow/knn.hpp"

#include <string>
#include <vector>

namespace optflow {

/// Exponential map from a rotation vector to SO(3). Uses the second-order
/// series below |r| = 1e-8.
Mat3 rodrigues(const Vec3& r);

/// Rotation vector of a rotation matrix (inverse of `rodrigues` for angles < pi).
Vec3 rotation_vector(const Mat3& rotation);

/// [v]x, the matrix with [v]x w = v x w.
Mat3 skew(const Vec3& v);

/// Right Jacobian of SO(3) at r.
Mat3 so3_right_jacobian(const Vec3& r);

/// d(R(r) p) / dr.
Mat3 rotation_jacobian(const Vec3& r, const Vec3& p);

inline Vec3 apply(const RigidMotion& motion, const Mat3& rotation, const Vec3& p) {
    return rotation * p + motion.t;
}

Vec3 apply_rigid(const RigidMotion& motion, const Vec3& p);
PointCloud apply_rigid(const RigidMotion& motion, const PointCloud& cloud);

/// a then b: p -> b(a(p)).
RigidMotion compose(const RigidMotion& a, const RigidMotion& b);

/// Rotation angle of a motion in radians.
double rotation_angle(const RigidMotion& motion);

struct IcpOptions {
    int max_iters = 30;
    double rejection_dist = 2.0;
    double min_rotation_step = 1e-6;     // radians
    double min_translation_step = 1e-6;  // meters
};

struct IcpResult {
    RigidMotion motion;
    int iterations = 0;
    bool converged = false;
    // Mean squared distance of the accepted pairs, recorded before each update.
    std::vector<double> mse_trace;
    std::vector<std::string> warnings;
};

/// Closed-form least-squares rigid motion taking `from[i]` onto `to[i]`.
RigidMotion kabsch(std::span<const Vec3> from, std::span<const Vec3> to);

/// Point-to-point ICP of `source` onto `target`. Returns identity with a warning
/// when fewer than three pairs survive rejection.
IcpResult icp_register(const PointCloud& source, const PointCloud& target, const IcpOptions& options = {});
IcpResult icp_register(const PointCloud& source, const SpatialIndex& target_index, const IcpOptions& options,
                       int threads = 1);

}  // namespace optflow
