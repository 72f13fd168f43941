// Copyright (c) 2026 stemsplat authors
// SPDX-License-Identifier: Apache-2.0

#include "stemsplat/rasterizer.hpp"

#include "stemsplat/errors.hpp"
#include "stemsplat/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace stemsplat {

namespace {

constexpr double kDepthVarFloor = 1e-10; // m^2, keeps the ray-space covariance invertible

} // namespace

ViewSplats project_gaussians(const GaussianField& field, const CameraView& view,
                             const RenderConfig& cfg) {
    ViewSplats out;
    out.view_id = view.id;
    out.width = view.width;
    out.height = view.height;
    out.splats.reserve(field.size());

    for (std::size_t i = 0; i < field.size(); ++i) {
        const Vec3 cam = view.to_camera(field.means[i]);
        if (cam.z() <= cfg.near_clip) continue;

        SplatProjection s;
        s.source = static_cast<std::uint32_t>(i);
        s.peak_alpha = field.alphas[i];
        s.u = view.pixel_of(cam);
        s.t = cam.norm();

        // covariance in the camera frame
        const Mat3 cov_cam = view.R * field.covariance(i) * view.R.transpose();

        // affine map from camera-frame offsets to (pixel_x, pixel_y, ray distance)
        const double iz = 1.0 / cam.z();
        Eigen::Matrix3d map;
        map << view.fx * iz, 0.0, -view.fx * cam.x() * iz * iz,
               0.0, view.fy * iz, -view.fy * cam.y() * iz * iz,
               cam.x() / s.t, cam.y() / s.t, cam.z() / s.t;
        Mat3 ray_cov = map * cov_cam * map.transpose();

        const Mat2 screen_raw = ray_cov.topLeftCorner<2, 2>();
        s.cov2d = floor_eigenvalues(screen_raw, cfg.eigen_floor_px2);
        ray_cov.topLeftCorner<2, 2>() = s.cov2d;
        s.cov2d_inv = s.cov2d.inverse();

        const Vec2 cross = ray_cov.topRightCorner<2, 1>();
        // depth-plane slope: conditional mean of ray distance given the pixel
        s.g = -(s.cov2d_inv * cross);
        // keep the conditional depth variance positive
        const double schur = ray_cov(2, 2) - cross.dot(s.cov2d_inv * cross);
        if (schur < kDepthVarFloor) ray_cov(2, 2) += kDepthVarFloor - schur;
        s.ray_cov_inv = ray_cov.inverse();

        s.footprint_px =
            cfg.footprint_sigma *
            std::sqrt(std::max(s.cov2d(0, 0) + s.cov2d(1, 1), 1e-12)); // >= sqrt(lambda_max)

        // cull splats whose footprint cannot touch the image; any in-image
        // pixel then sits beyond footprint_sigma Mahalanobis units, so the
        // lost contribution is <= alpha_cap * exp(-footprint_sigma^2 / 2)
        if (s.u.x() + s.footprint_px < 0 || s.u.x() - s.footprint_px > view.width ||
            s.u.y() + s.footprint_px < 0 || s.u.y() - s.footprint_px > view.height)
            continue;

        out.splats.push_back(s);
    }

    std::sort(out.splats.begin(), out.splats.end(), [](const SplatProjection& a, const SplatProjection& b) {
        if (a.t != b.t) return a.t < b.t;
        return a.source < b.source;
    });
    return out;
}

namespace {

void composite_pixel_list(const ViewSplats& vs, const RenderConfig& cfg,
                          const std::vector<std::uint32_t>* list, int px, int py, float& out_a,
                          float* out_wsum) {
    const Vec2 p(px + 0.5, py + 0.5);
    double transmittance = 1.0;
    double wsum = 0.0;
    const std::size_t n = list ? list->size() : vs.splats.size();
    for (std::size_t k = 0; k < n; ++k) {
        const SplatProjection& s = vs.splats[list ? (*list)[k] : k];
        const double a = s.alpha_at(p, cfg.alpha_cap);
        if (a < cfg.eps_alpha) continue;
        wsum += a * transmittance;
        transmittance *= 1.0 - a;
        if (transmittance < cfg.t_stop) break;
    }
    out_a = static_cast<float>(1.0 - transmittance);
    if (out_wsum) *out_wsum = static_cast<float>(wsum);
}

} // namespace

AlphaMask render_alpha_mask(const ViewSplats& splats, const CameraView& view,
                            const RenderConfig& cfg) {
    AlphaMask mask;
    mask.view_id = splats.view_id;
    mask.width = view.width;
    mask.height = view.height;
    mask.a.assign(static_cast<std::size_t>(view.width) * view.height, 0.0f);
    if (cfg.track_wsum) mask.wsum.assign(mask.a.size(), 0.0f);

    const int tile = std::max(1, cfg.tile_size);
    const int tiles_x = (view.width + tile - 1) / tile;
    const int tiles_y = (view.height + tile - 1) / tile;

    // bin splats into tiles; iterating in depth order keeps every tile list sorted
    std::vector<std::vector<std::uint32_t>> bins(static_cast<std::size_t>(tiles_x) * tiles_y);
    for (std::uint32_t i = 0; i < splats.splats.size(); ++i) {
        const SplatProjection& s = splats.splats[i];
        const double r = s.footprint_px;
        const int x0 = std::clamp(static_cast<int>(std::floor((s.u.x() - r) / tile)), 0, tiles_x - 1);
        const int x1 = std::clamp(static_cast<int>(std::floor((s.u.x() + r) / tile)), 0, tiles_x - 1);
        const int y0 = std::clamp(static_cast<int>(std::floor((s.u.y() - r) / tile)), 0, tiles_y - 1);
        const int y1 = std::clamp(static_cast<int>(std::floor((s.u.y() + r) / tile)), 0, tiles_y - 1);
        if (s.u.x() + r < 0 || s.u.x() - r > view.width || s.u.y() + r < 0 || s.u.y() - r > view.height)
            continue;
        for (int ty = y0; ty <= y1; ++ty)
            for (int tx = x0; tx <= x1; ++tx)
                bins[static_cast<std::size_t>(ty) * tiles_x + tx].push_back(i);
    }

    parallel_for(bins.size(), cfg.threads, [&](std::size_t b0, std::size_t b1) {
        for (std::size_t b = b0; b < b1; ++b) {
            const auto& list = bins[b];
            const int tx = static_cast<int>(b % tiles_x);
            const int ty = static_cast<int>(b / tiles_x);
            const int px1 = std::min(view.width, (tx + 1) * tile);
            const int py1 = std::min(view.height, (ty + 1) * tile);
            for (int py = ty * tile; py < py1; ++py) {
                for (int px = tx * tile; px < px1; ++px) {
                    // pixels with an empty list keep a = 0; every skipped splat
                    // is below eps_alpha there whenever
                    // alpha_cap * exp(-footprint_sigma^2/2) <= eps_alpha
                    if (list.empty()) continue;
                    const std::size_t idx = static_cast<std::size_t>(py) * view.width + px;
                    composite_pixel_list(splats, cfg, &list, px, py, mask.a[idx],
                                         cfg.track_wsum ? &mask.wsum[idx] : nullptr);
                }
            }
        }
    });
    return mask;
}

AlphaMask render_alpha_mask_naive(const ViewSplats& splats, const CameraView& view,
                                  const RenderConfig& cfg) {
    AlphaMask mask;
    mask.view_id = splats.view_id;
    mask.width = view.width;
    mask.height = view.height;
    mask.a.assign(static_cast<std::size_t>(view.width) * view.height, 0.0f);
    if (cfg.track_wsum) mask.wsum.assign(mask.a.size(), 0.0f);

    parallel_for(static_cast<std::size_t>(view.height), cfg.threads, [&](std::size_t y0, std::size_t y1) {
        for (std::size_t py = y0; py < y1; ++py)
            for (int px = 0; px < view.width; ++px) {
                const std::size_t idx = py * view.width + px;
                composite_pixel_list(splats, cfg, nullptr, px, static_cast<int>(py), mask.a[idx],
                                     cfg.track_wsum ? &mask.wsum[idx] : nullptr);
            }
    });
    return mask;
}

bool foreground_gate(const AlphaMask& mask, const Vec2& u, double tau_mask) {
    const int px = static_cast<int>(std::floor(u.x()));
    const int py = static_cast<int>(std::floor(u.y()));
    if (px < 0 || py < 0 || px >= mask.width || py >= mask.height) return false;
    return mask.at(px, py) > tau_mask;
}

void save_mask_pgm(const AlphaMask& mask, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << "P5\n" << mask.width << " " << mask.height << "\n65535\n";
    for (float v : mask.a) {
        const auto g = static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 65535.0f));
        const unsigned char bytes[2] = {static_cast<unsigned char>(g >> 8),
                                        static_cast<unsigned char>(g & 0xff)};
        out.write(reinterpret_cast<const char*>(bytes), 2);
    }
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

} // namespace stemsplat
