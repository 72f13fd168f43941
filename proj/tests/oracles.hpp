// Copyright (c) 2026 stemsplat authors
// SPDX-License-Identifier: Apache-2.0
//
// Test-only reference implementations, kept independent of the production
// code paths they check.
#pragma once

#include "stemsplat/scene_io.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace stemsplat::oracle {

/// Straightforward depth-clamped cumulative opacity: projects every Gaussian
/// itself, composites all of them in depth order, applies no screen-space
/// gating, no tiling and no early termination. Intended for scenes whose
/// splats are large enough that the production eigenvalue floor is inactive.
inline double naive_pointwise_alpha(const GaussianField& field, const CameraView& view,
                                    const Vec3& p, double alpha_cap) {
    struct Term {
        double t;
        double alpha;
    };
    const Vec3 cam_p = view.R * p + view.t;
    const double r_p = cam_p.norm();
    const Vec2 u_p(view.fx * cam_p.x() / cam_p.z() + view.cx,
                   view.fy * cam_p.y() / cam_p.z() + view.cy);

    std::vector<Term> terms;
    for (std::size_t k = 0; k < field.size(); ++k) {
        const Vec3 cam = view.R * field.means[k] + view.t;
        if (cam.z() <= 0.0) continue;
        const double t_k = cam.norm();
        const Vec2 u_k(view.fx * cam.x() / cam.z() + view.cx,
                       view.fy * cam.y() / cam.z() + view.cy);

        const Mat3 rot = field.rotations[k].toRotationMatrix();
        const Mat3 cov_world = rot * field.scales[k].cwiseAbs2().asDiagonal() * rot.transpose();
        const Mat3 cov_cam = view.R * cov_world * view.R.transpose();
        Eigen::Matrix3d map;
        const double iz = 1.0 / cam.z();
        map << view.fx * iz, 0, -view.fx * cam.x() * iz * iz,
               0, view.fy * iz, -view.fy * cam.y() * iz * iz,
               cam.x() / t_k, cam.y() / t_k, cam.z() / t_k;
        const Mat3 ray_cov = map * cov_cam * map.transpose();

        const Mat2 screen = ray_cov.topLeftCorner<2, 2>();
        const Vec2 cross = ray_cov.topRightCorner<2, 1>();
        const Vec2 slope = -(screen.inverse() * cross);

        const Vec2 du = u_k - u_p;
        const double plane_depth = t_k + slope.dot(du);
        const Vec3 delta(du.x(), du.y(), t_k - std::min(r_p, plane_depth));
        const double m2 = delta.dot(ray_cov.inverse() * delta);
        terms.push_back({t_k, std::min(alpha_cap, field.alphas[k] * std::exp(-0.5 * m2))});
    }
    std::sort(terms.begin(), terms.end(), [](const Term& a, const Term& b) { return a.t < b.t; });

    double transmittance = 1.0;
    for (const auto& term : terms) transmittance *= 1.0 - term.alpha;
    return 1.0 - transmittance;
}

} // namespace stemsplat::oracle
