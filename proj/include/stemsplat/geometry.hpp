// Copyright (c) 2026 stemsplat authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <cmath>

namespace stemsplat {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// Rotation matrix from a (w, x, y, z) quaternion, normalized first.
inline Mat3 rotation_from_wxyz(double w, double x, double y, double z) {
    Quat q(w, x, y, z);
    q.normalize();
    return q.toRotationMatrix();
}

/// Clamp the eigenvalues of a symmetric 2x2 matrix from below.
/// Returns the floored matrix; eigenvectors are preserved.
inline Mat2 floor_eigenvalues(const Mat2& sym, double floor) {
    Eigen::SelfAdjointEigenSolver<Mat2> es(sym);
    Vec2 lam = es.eigenvalues().cwiseMax(floor);
    return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

/// Smallest rotation angle (radians) between a direction and the +z axis,
/// treating a and -a as the same axis.
inline double tilt_from_vertical(const Vec3& axis) {
    const double c = std::min(1.0, std::abs(axis.normalized().z()));
    return std::acos(c);
}

/// Rodrigues update: rotate `v` by the rotation vector `omega`.
inline Vec3 rotate_by_rotvec(const Vec3& omega, const Vec3& v) {
    const double angle = omega.norm();
    if (angle < 1e-14) return v;
    return Eigen::AngleAxisd(angle, omega / angle) * v;
}

} // namespace stemsplat
