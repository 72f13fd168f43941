// Copyright (c) 2026 stemsplat authors
// SPDX-License-Identifier: Apache-2.0

#include "stemsplat/opacity_integral.hpp"

#include "stemsplat/rng.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <numeric>

using namespace stemsplat;

namespace {

CameraView test_view(int w = 320, int h = 240, double f = 500.0) {
    CameraView v;
    v.id = "test";
    v.width = w;
    v.height = h;
    v.fx = v.fy = f;
    v.cx = w / 2.0;
    v.cy = h / 2.0;
    return v;
}

/// Splats large enough that the screen-covariance floor never clamps.
GaussianField fat_random_field(RngStream& rng, int max_splats) {
    GaussianField f;
    const int n = 1 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(max_splats)));
    for (int i = 0; i < n; ++i) {
        f.means.push_back(Vec3(rng.uniform(-1.2, 1.2), rng.uniform(-0.9, 0.9), rng.uniform(8, 13)));
        f.log_scales.push_back(
            Vec3(rng.uniform(0.1, 0.35), rng.uniform(0.1, 0.35), rng.uniform(0.1, 0.35))
                .array()
                .log());
        Eigen::Vector4d q(rng.next_normal(), rng.next_normal(), rng.next_normal(), rng.next_normal());
        if (q.norm() < 1e-6) q = Eigen::Vector4d(1, 0, 0, 0);
        f.rotations_raw.push_back(q);
        f.logit_opacities.push_back(logit(rng.uniform(0.1, 0.95)));
    }
    f.activate();
    return f;
}

GaussianField single(const Vec3& mean, const Vec3& scale, double alpha) {
    GaussianField f;
    f.means.push_back(mean);
    f.log_scales.push_back(scale.array().log());
    f.rotations_raw.push_back(Eigen::Vector4d(1, 0, 0, 0));
    f.logit_opacities.push_back(logit(alpha));
    f.activate();
    return f;
}

} // namespace

TEST_CASE("pointwise opacity at the mean of the only splat equals its opacity") {
    const CameraView v = test_view();
    const GaussianField f = single(Vec3(0.2, -0.1, 10), Vec3(0.2, 0.3, 0.15), 0.8);
    const ViewSplats vs = project_gaussians(f, v);
    const double a = pointwise_opacity(f.means[0], v, vs);
    CHECK(a == doctest::Approx(0.8).epsilon(1e-12));

    // saturated splat is capped
    const GaussianField g = single(Vec3(0, 0, 10), Vec3(0.2, 0.2, 0.2), 0.999);
    ScoreConfig cfg;
    const double capped = pointwise_opacity(g.means[0], v, project_gaussians(g, v), cfg);
    CHECK(capped == doctest::Approx(cfg.alpha_cap).epsilon(1e-12));
}

TEST_CASE("depth clamp: far behind an opaque splat the integral keeps the surface value") {
    const CameraView v = test_view();
    const GaussianField f = single(Vec3(0.1, 0.05, 9), Vec3(0.25, 0.25, 0.25), 0.9);
    const ViewSplats vs = project_gaussians(f, v);

    const Vec3 dir = (f.means[0] - v.center_world()).normalized();
    const double at_mean = pointwise_opacity(f.means[0], v, vs);
    const double behind = pointwise_opacity(f.means[0] + 3.0 * dir, v, vs);
    CHECK(behind == doctest::Approx(at_mean).epsilon(1e-9));
}

TEST_CASE("optimized evaluator matches the naive oracle") {
    RngStream rng(2024);
    const CameraView v = test_view();
    ScoreConfig cfg; // production gate at 6 sigmas
    int tested = 0;
    for (int scene = 0; scene < 8; ++scene) {
        const GaussianField f = fat_random_field(rng, 20);
        const ViewSplats vs = project_gaussians(f, v);
        for (int q = 0; q < 40; ++q) {
            const std::size_t k = rng.next_below(f.size());
            const Vec3 p = f.means[k] + Vec3(rng.next_normal(), rng.next_normal(), rng.next_normal())
                                            .cwiseProduct(2.0 * f.scales[k]);
            const Vec3 cam = v.to_camera(p);
            if (cam.z() <= 0.5) continue;
            if (!v.pixel_inside(v.pixel_of(cam))) continue;
            const double fast = pointwise_opacity(p, v, vs, cfg);
            const double slow = oracle::naive_pointwise_alpha(f, v, p, cfg.alpha_cap);
            CHECK(std::abs(fast - slow) < 1e-5);
            CHECK(fast >= 0.0);
            CHECK(fast <= 1.0);
            ++tested;
        }
    }
    CHECK(tested > 200);
}

TEST_CASE("moving beyond every local depth plane freezes the integral") {
    RngStream rng(77);
    const CameraView v = test_view();
    const GaussianField f = fat_random_field(rng, 10);
    const ViewSplats vs = project_gaussians(f, v);

    for (int trial = 0; trial < 20; ++trial) {
        const Vec2 px(rng.uniform(40, 280), rng.uniform(40, 200));
        const Vec3 dir_cam((px.x() - v.cx) / v.fx, (px.y() - v.cy) / v.fy, 1.0);
        const Vec3 dir = (v.R.transpose() * dir_cam).normalized();
        const Vec3 origin = v.center_world();

        double deepest_plane = 0.0;
        for (const auto& s : vs.splats)
            deepest_plane = std::max(deepest_plane, s.depth_plane_at(px));
        const double s0 = deepest_plane + 0.5;
        const double a0 = pointwise_opacity(origin + s0 * dir, v, vs);
        for (double step : {1.0, 3.0, 10.0}) {
            const double a = pointwise_opacity(origin + (s0 + step) * dir, v, vs);
            CHECK(a == doctest::Approx(a0).epsilon(1e-12)); // constant, so never decreasing
        }
    }
}

TEST_CASE("score_points aggregates the per-view minimum and the support count") {
    // two cameras at right angles; the point sits on the splat surface for
    // view A but in front of it for view B, so B reports a lower opacity
    CameraView a = test_view();
    CameraView b = test_view();
    // camera at (12, 0, 10) looking along -x: rows are right, down, forward
    b.R.row(0) = Vec3(0, 1, 0).transpose();
    b.R.row(1) = Vec3(0, 0, -1).transpose();
    b.R.row(2) = Vec3(-1, 0, 0).transpose();
    b.t = -b.R * Vec3(12, 0, 10);

    // flat splat: tight along z, which is view A's ray but view B's image plane
    const GaussianField f = single(Vec3(0, 0, 10), Vec3(0.3, 0.3, 0.1), 0.85);
    RenderConfig rc;
    std::vector<ViewSplats> vs = {project_gaussians(f, a, rc), project_gaussians(f, b, rc)};
    CameraRig rig;
    rig.views = {a, b};
    std::vector<AlphaMask> masks = {render_alpha_mask(vs[0], a, rc),
                                    render_alpha_mask(vs[1], b, rc)};

    // behind the surface for A (clamped to the on-surface value), two sigma
    // off the surface in B's image plane (suppressed)
    const Vec3 p = f.means[0] + Vec3(0, 0, 0.2);
    ScoreConfig cfg;
    cfg.dense = true;
    const double alpha_a = pointwise_opacity(p, a, vs[0], cfg);
    const double alpha_b = pointwise_opacity(p, b, vs[1], cfg);
    CHECK(alpha_b < alpha_a); // closer to b's camera than the surface

    CandidateCloud cloud;
    cloud.points = {p};
    cloud.source = {0};
    const ScoredPointCloud scored = score_points(cloud, rig, vs, masks, cfg);
    REQUIRE(scored.size() == 1);
    CHECK(scored.support[0] == 2);
    CHECK(scored.reliability[0] == doctest::Approx(std::min(alpha_a, alpha_b)).epsilon(1e-6));
}

TEST_CASE("score_points drops unseen points in surface mode and keeps them in dense mode") {
    const CameraView v = test_view();
    const GaussianField f = single(Vec3(0, 0, 10), Vec3(0.2, 0.2, 0.2), 0.9);
    RenderConfig rc;
    std::vector<ViewSplats> vs = {project_gaussians(f, v, rc)};
    std::vector<AlphaMask> masks = {render_alpha_mask(vs[0], v, rc)};
    CameraRig rig;
    rig.views = {v};

    CandidateCloud cloud;
    cloud.points = {f.means[0], Vec3(0, 0, -5)}; // second point behind the camera
    cloud.source = {0, 0};

    ScoreConfig surface;
    const ScoredPointCloud kept = score_points(cloud, rig, vs, masks, surface);
    REQUIRE(kept.size() == 1);
    CHECK(kept.support[0] == 1);

    ScoreConfig dense;
    dense.dense = true;
    const ScoredPointCloud all = score_points(cloud, rig, vs, masks, dense);
    REQUIRE(all.size() == 2);
    CHECK(all.support[1] == 0);
    CHECK(all.reliability[1] == 0.0f); // support 0 forces reliability 0
}

TEST_CASE("score_points is invariant to view order") {
    RngStream rng(404);
    CameraView a = test_view();
    CameraView b = test_view();
    b.t = Vec3(0.4, -0.2, 0.1);
    const GaussianField f = fat_random_field(rng, 15);
    RenderConfig rc;
    std::vector<ViewSplats> vs = {project_gaussians(f, a, rc), project_gaussians(f, b, rc)};
    std::vector<AlphaMask> masks = {render_alpha_mask(vs[0], a, rc),
                                    render_alpha_mask(vs[1], b, rc)};
    CameraRig rig_ab, rig_ba;
    rig_ab.views = {a, b};
    rig_ba.views = {b, a};

    CandidateCloud cloud;
    for (int i = 0; i < 200; ++i) {
        const std::size_t k = rng.next_below(f.size());
        cloud.points.push_back(f.means[k] +
                               Vec3(rng.next_normal(), rng.next_normal(), rng.next_normal())
                                   .cwiseProduct(f.scales[k]));
        cloud.source.push_back(static_cast<std::uint32_t>(k));
    }
    ScoreConfig cfg;
    cfg.dense = true;
    const ScoredPointCloud fwd = score_points(cloud, rig_ab, vs, masks, cfg);
    std::vector<ViewSplats> vs_r = {vs[1], vs[0]};
    std::vector<AlphaMask> masks_r = {masks[1], masks[0]};
    const ScoredPointCloud rev = score_points(cloud, rig_ba, vs_r, masks_r, cfg);
    REQUIRE(fwd.size() == rev.size());
    for (std::size_t i = 0; i < fwd.size(); ++i) {
        CHECK(fwd.support[i] == rev.support[i]);
        CHECK(fwd.reliability[i] == rev.reliability[i]);
    }
}

TEST_CASE("scored cloud: save/load round trip and layout errors") {
    ScoredPointCloud cloud;
    cloud.points = {Vec3(1, 2, 3), Vec3(-4.25, 0.5, 99)};
    cloud.reliability = {0.75f, 0.0f};
    cloud.support = {3, 0};
    cloud.source = {17, 42};
    const auto path = std::filesystem::temp_directory_path() / "stemsplat_scored.ply";
    save_scored_cloud(cloud, path);
    const ScoredPointCloud back = load_scored_cloud(path);
    REQUIRE(back.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(back.points[i].x() == doctest::Approx(cloud.points[i].x()));
        CHECK(back.reliability[i] == cloud.reliability[i]);
        CHECK(back.support[i] == cloud.support[i]);
        CHECK(back.source[i] == cloud.source[i]);
    }
}

TEST_CASE("argument and configuration errors") {
    const CameraView v = test_view();
    const GaussianField f = single(Vec3(0, 0, 10), Vec3(0.2, 0.2, 0.2), 0.9);
    const ViewSplats vs = project_gaussians(f, v);
    CHECK_THROWS_AS(
        pointwise_opacity(Vec3(std::numeric_limits<double>::quiet_NaN(), 0, 10), v, vs),
        DataError);
    CHECK_THROWS_AS(pointwise_opacity(Vec3(50, 0, 10), v, vs), DataError); // outside image

    CandidateCloud cloud;
    cloud.points = {Vec3(0, 0, 10)};
    cloud.source = {0};
    CameraRig rig;
    rig.views = {v};
    std::vector<ViewSplats> splats = {vs};
    std::vector<AlphaMask> no_masks;
    CHECK_THROWS_AS(score_points(cloud, rig, splats, no_masks, ScoreConfig{}), ConfigError);
}
