// Copyright (c) 2026 stemsplat authors
// SPDX-License-Identifier: Apache-2.0

#include "stemsplat/opacity_integral.hpp"

#include "stemsplat/errors.hpp"
#include "stemsplat/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace stemsplat {

namespace {

constexpr double kTransmittanceEpsilon = 1e-9; // early-out far below any tested tolerance

double composite_point(const Vec2& u_p, double r_p, const ViewSplats& splats,
                       const std::vector<std::uint32_t>* candidates, const ScoreConfig& cfg) {
    const double gate2 = cfg.mahalanobis_gate * cfg.mahalanobis_gate;
    double transmittance = 1.0;
    const std::size_t n = candidates ? candidates->size() : splats.splats.size();
    for (std::size_t k = 0; k < n; ++k) {
        const SplatProjection& s = splats.splats[candidates ? (*candidates)[k] : k];
        const Vec2 du = s.u - u_p;
        if (du.dot(s.cov2d_inv * du) > gate2) continue;
        const double clamped_t = std::min(r_p, s.depth_plane_at(u_p));
        const Vec3 d(du.x(), du.y(), s.t - clamped_t);
        const double m2 = d.dot(s.ray_cov_inv * d);
        const double a = std::min(cfg.alpha_cap, s.peak_alpha * std::exp(-0.5 * m2));
        transmittance *= 1.0 - a;
        if (transmittance < kTransmittanceEpsilon) break;
    }
    return 1.0 - transmittance;
}

/// Coarse pixel-block index over one view's splats, so that per-point
/// queries touch only splats whose gate ellipse can reach the pixel.
struct SplatBlockIndex {
    static constexpr int kBlock = 32;
    int bx = 0, by = 0;
    std::vector<std::vector<std::uint32_t>> lists;

    SplatBlockIndex(const ViewSplats& vs, double gate) {
        bx = std::max(1, (vs.width + kBlock - 1) / kBlock);
        by = std::max(1, (vs.height + kBlock - 1) / kBlock);
        lists.resize(static_cast<std::size_t>(bx) * by);
        for (std::uint32_t i = 0; i < vs.splats.size(); ++i) {
            const SplatProjection& s = vs.splats[i];
            const double r = gate * std::sqrt(std::max(s.cov2d(0, 0) + s.cov2d(1, 1), 1e-12));
            const int x0 = std::clamp(static_cast<int>(std::floor((s.u.x() - r) / kBlock)), 0, bx - 1);
            const int x1 = std::clamp(static_cast<int>(std::floor((s.u.x() + r) / kBlock)), 0, bx - 1);
            const int y0 = std::clamp(static_cast<int>(std::floor((s.u.y() - r) / kBlock)), 0, by - 1);
            const int y1 = std::clamp(static_cast<int>(std::floor((s.u.y() + r) / kBlock)), 0, by - 1);
            if (s.u.x() + r < 0 || s.u.x() - r > vs.width || s.u.y() + r < 0 || s.u.y() - r > vs.height)
                continue;
            for (int y = y0; y <= y1; ++y)
                for (int x = x0; x <= x1; ++x)
                    lists[static_cast<std::size_t>(y) * bx + x].push_back(i);
        }
    }

    const std::vector<std::uint32_t>& at(const Vec2& u) const {
        const int x = std::clamp(static_cast<int>(u.x()) / kBlock, 0, bx - 1);
        const int y = std::clamp(static_cast<int>(u.y()) / kBlock, 0, by - 1);
        return lists[static_cast<std::size_t>(y) * bx + x];
    }
};

} // namespace

double pointwise_opacity(const Vec3& p, const CameraView& view, const ViewSplats& splats,
                         const ScoreConfig& cfg) {
    if (!p.allFinite()) throw DataError("non-finite query point");
    const Vec3 cam = view.to_camera(p);
    if (cam.z() <= 0.0) throw DataError("query point is behind the camera");
    const Vec2 u_p = view.pixel_of(cam);
    if (!view.pixel_inside(u_p)) throw DataError("query point projects outside the image");
    return composite_point(u_p, cam.norm(), splats, nullptr, cfg);
}

ScoredPointCloud score_points(const CandidateCloud& cloud, const CameraRig& rig,
                              const std::vector<ViewSplats>& splats,
                              const std::vector<AlphaMask>& masks, const ScoreConfig& cfg) {
    if (splats.size() != rig.size() || masks.size() != rig.size())
        throw ConfigError("splats/masks must correspond 1:1 with rig views");

    const std::size_t n = cloud.size();
    std::vector<float> reliability(n, 0.0f);
    std::vector<std::uint32_t> support(n, 0);

    std::vector<SplatBlockIndex> indices;
    indices.reserve(rig.size());
    for (const auto& vs : splats) indices.emplace_back(vs, cfg.mahalanobis_gate);

    parallel_for(n, cfg.threads, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            const Vec3& p = cloud.points[i];
            double amin = 1.0;
            std::uint32_t w = 0;
            for (std::size_t v = 0; v < rig.size(); ++v) {
                const CameraView& view = rig.views[v];
                const Vec3 cam = view.to_camera(p);
                if (cam.z() <= 0.0) continue;
                const Vec2 u_p = view.pixel_of(cam);
                if (!view.pixel_inside(u_p)) continue;
                if (!foreground_gate(masks[v], u_p, cfg.tau_mask)) continue;
                const double a =
                    composite_point(u_p, cam.norm(), splats[v], &indices[v].at(u_p), cfg);
                amin = std::min(amin, a);
                ++w;
            }
            support[i] = w;
            reliability[i] = w > 0 ? static_cast<float>(amin) : 0.0f;
        }
    });

    ScoredPointCloud out;
    out.points.reserve(n);
    out.reliability.reserve(n);
    out.support.reserve(n);
    out.source.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const bool keep = cfg.dense || (reliability[i] > cfg.tau && support[i] > 0);
        if (!keep) continue;
        out.points.push_back(cloud.points[i]);
        out.reliability.push_back(reliability[i]);
        out.support.push_back(support[i]);
        out.source.push_back(cloud.source[i]);
    }
    return out;
}

void save_scored_cloud(const ScoredPointCloud& cloud, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << "ply\nformat binary_little_endian 1.0\n";
    out << "element vertex " << cloud.size() << "\n";
    out << "property float x\nproperty float y\nproperty float z\n";
    out << "property float reliability\nproperty int support\nproperty uint source\n";
    out << "end_header\n";
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const float xyz[4] = {static_cast<float>(cloud.points[i].x()),
                              static_cast<float>(cloud.points[i].y()),
                              static_cast<float>(cloud.points[i].z()), cloud.reliability[i]};
        out.write(reinterpret_cast<const char*>(xyz), sizeof(xyz));
        const std::int32_t sup = static_cast<std::int32_t>(cloud.support[i]);
        out.write(reinterpret_cast<const char*>(&sup), 4);
        out.write(reinterpret_cast<const char*>(&cloud.source[i]), 4);
    }
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

ScoredPointCloud load_scored_cloud(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line) || (line != "ply" && line != "ply\r"))
        throw FormatError("'" + path.string() + "' is not a PLY file");
    std::size_t count = 0;
    std::vector<std::string> props;
    bool binary = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.rfind("format ", 0) == 0) binary = line.find("binary_little_endian") != std::string::npos;
        else if (line.rfind("element vertex ", 0) == 0) count = std::stoull(line.substr(15));
        else if (line.rfind("property ", 0) == 0) {
            const auto sp = line.rfind(' ');
            props.push_back(line.substr(sp + 1));
        } else if (line == "end_header") break;
    }
    const std::vector<std::string> expected = {"x", "y", "z", "reliability", "support", "source"};
    if (!binary || props != expected)
        throw FormatError("'" + path.string() + "' does not have the scored-cloud layout");

    ScoredPointCloud cloud;
    cloud.points.resize(count);
    cloud.reliability.resize(count);
    cloud.support.resize(count);
    cloud.source.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        float xyz[4];
        std::int32_t sup;
        std::uint32_t src;
        if (!in.read(reinterpret_cast<char*>(xyz), sizeof(xyz)) ||
            !in.read(reinterpret_cast<char*>(&sup), 4) || !in.read(reinterpret_cast<char*>(&src), 4))
            throw FormatError("truncated scored cloud in '" + path.string() + "'");
        cloud.points[i] = Vec3(xyz[0], xyz[1], xyz[2]);
        cloud.reliability[i] = xyz[3];
        cloud.support[i] = static_cast<std::uint32_t>(sup);
        cloud.source[i] = src;
    }
    return cloud;
}

} // namespace stemsplat
