// Copyright (c) 2026 stemsplat authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "stemsplat/geometry.hpp"
#include "stemsplat/scene_io.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace stemsplat {

struct RenderConfig {
    double alpha_cap = 0.99;    // per-splat contribution saturation
    double eps_alpha = 1.0 / 255.0; // contributions below this are skipped
    double t_stop = 1e-4;       // per-pixel early stop on transmittance
    double eigen_floor_px2 = 0.3; // screen-covariance eigenvalue floor (px^2)
    double footprint_sigma = 3.5; // rasterized footprint radius, in sigmas
    double near_clip = 0.2;     // meters, camera-frame z
    int tile_size = 16;
    int threads = 0;            // 0 = hardware concurrency
    bool track_wsum = false;    // also accumulate sum of compositing weights
};

/// Screen-space quantities of one Gaussian in one view.
struct SplatProjection {
    Vec2 u;                // projected mean, pixels
    double t = 0;          // ray distance of the mean, meters
    Vec2 g;                // ray-distance slope over the image plane, m/px
    Mat2 cov2d;            // floored screen covariance, px^2
    Mat2 cov2d_inv;
    Mat3 ray_cov_inv;      // inverse covariance in (px, px, m) ray space
    double peak_alpha = 0; // activated opacity
    double footprint_px = 0;
    std::uint32_t source = 0; // index into the GaussianField

    /// Predicted ray distance of this Gaussian's local depth plane at pixel p.
    double depth_plane_at(const Vec2& p) const { return t + g.dot(u - p); }

    /// Compositing contribution at a pixel, capped; never negative.
    double alpha_at(const Vec2& p, double alpha_cap) const {
        const Vec2 d = u - p;
        const double m2 = d.dot(cov2d_inv * d);
        return std::min(alpha_cap, peak_alpha * std::exp(-0.5 * m2));
    }
};

/// All visible splats of one view, sorted by ascending ray distance.
struct ViewSplats {
    std::string view_id;
    int width = 0;
    int height = 0;
    std::vector<SplatProjection> splats;
};

struct AlphaMask {
    std::string view_id;
    int width = 0;
    int height = 0;
    std::vector<float> a;    // accumulated alpha per pixel, in [0, 1]
    std::vector<float> wsum; // only filled when RenderConfig::track_wsum

    float at(int x, int y) const { return a[static_cast<std::size_t>(y) * width + x]; }
};

/// Perspective projection of the whole field into one view. Gaussians behind
/// the near plane, or whose footprint cannot reach the image, are culled; a
/// culled splat contributes at most alpha_cap * exp(-footprint_sigma^2 / 2)
/// at any in-image pixel.
ViewSplats project_gaussians(const GaussianField& field, const CameraView& view,
                             const RenderConfig& cfg = {});

/// Tiled front-to-back compositing of the accumulated alpha mask.
AlphaMask render_alpha_mask(const ViewSplats& splats, const CameraView& view,
                            const RenderConfig& cfg = {});

/// Reference path: every splat against every pixel, no tiling. Applies the
/// same cutoff rules as the tiled path, so the two agree exactly.
AlphaMask render_alpha_mask_naive(const ViewSplats& splats, const CameraView& view,
                                  const RenderConfig& cfg = {});

/// m_v(p): does pixel u land on reconstructed foreground? Out-of-image
/// queries return false.
bool foreground_gate(const AlphaMask& mask, const Vec2& u, double tau_mask);

/// 16-bit PGM debug dump of a mask.
void save_mask_pgm(const AlphaMask& mask, const std::filesystem::path& path);

} // namespace stemsplat
