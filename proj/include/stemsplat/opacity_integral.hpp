// Copyright (c) 2026 stemsplat authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "stemsplat/rasterizer.hpp"
#include "stemsplat/sampler.hpp"

#include <filesystem>
#include <vector>

namespace stemsplat {

struct ScoreConfig {
    double tau = 0.5;             // reliability threshold for surface extraction
    double tau_mask = 0.1;        // foreground gate on the accumulated alpha mask
    double alpha_cap = 0.99;      // per-splat saturation, matches the renderer
    double mahalanobis_gate = 6.0; // screen-space gate for contributing splats
    bool dense = false;           // keep every point, storing (reliability, support)
    int threads = 0;
};

/// Sampled points with their multi-view reliability. reliability is the
/// minimum depth-clamped cumulative opacity over contributing views; support
/// counts those views. Points with support == 0 carry reliability 0.
struct ScoredPointCloud {
    std::vector<Vec3> points;
    std::vector<float> reliability;
    std::vector<std::uint32_t> support;
    std::vector<std::uint32_t> source;

    std::size_t size() const { return points.size(); }
};

/// Depth-clamped cumulative opacity of one 3D point in one view.
///
/// Walks the view's splats front to back; each splat contributes
/// alpha_k * exp(-1/2 * d^T Sigma^-1 d) with d the (pixel, ray-distance)
/// offset, the ray-distance residual saturating at the splat's local depth
/// plane so opacity stops growing behind the surface.
///
/// Precondition: p projects inside the image (z > near plane and pixel in
/// bounds); violations throw. Non-finite input throws.
double pointwise_opacity(const Vec3& p, const CameraView& view, const ViewSplats& splats,
                         const ScoreConfig& cfg = {});

/// Score every candidate against every view. A view contributes only when
/// the point projects inside its image onto a foreground pixel
/// (mask > tau_mask). In surface mode points failing
/// reliability > tau (or with zero support) are dropped; in dense mode all
/// points are kept.
ScoredPointCloud score_points(const CandidateCloud& cloud, const CameraRig& rig,
                              const std::vector<ViewSplats>& splats,
                              const std::vector<AlphaMask>& masks, const ScoreConfig& cfg = {});

/// Binary little-endian PLY with properties, in order:
/// float x, y, z, reliability; int support; uint source.
void save_scored_cloud(const ScoredPointCloud& cloud, const std::filesystem::path& path);
ScoredPointCloud load_scored_cloud(const std::filesystem::path& path);

} // namespace stemsplat
