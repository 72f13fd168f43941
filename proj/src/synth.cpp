// Copyright (c) 2026 stemsplat authors
// SPDX-License-Identifier: Apache-2.0

#include "stemsplat/synth.hpp"

#include "stemsplat/errors.hpp"
#include "stemsplat/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace stemsplat {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

void push_gaussian(GaussianField& f, const Vec3& mean, const Vec3& scale, const Quat& rot,
                   double alpha) {
    f.means.push_back(mean);
    f.log_scales.push_back(scale.array().log());
    f.rotations_raw.push_back(Eigen::Vector4d(rot.w(), rot.x(), rot.y(), rot.z()));
    const double a = std::clamp(alpha, 1e-4, 1.0 - 1e-4);
    f.logit_opacities.push_back(logit(a));
}

void append_field(GaussianField& dst, const GaussianField& src) {
    dst.means.insert(dst.means.end(), src.means.begin(), src.means.end());
    dst.log_scales.insert(dst.log_scales.end(), src.log_scales.begin(), src.log_scales.end());
    dst.rotations_raw.insert(dst.rotations_raw.end(), src.rotations_raw.begin(),
                             src.rotations_raw.end());
    dst.logit_opacities.insert(dst.logit_opacities.end(), src.logit_opacities.begin(),
                               src.logit_opacities.end());
}

Mat3 look_at_world_to_cam(const Vec3& pos, const Vec3& target) {
    const Vec3 fwd = (target - pos).normalized();
    Vec3 right = fwd.cross(Vec3::UnitZ());
    if (right.norm() < 1e-9) right = fwd.cross(Vec3::UnitX());
    right.normalize();
    const Vec3 down = fwd.cross(right); // completes the x-right, y-down, z-forward frame
    Mat3 R;
    R.row(0) = right.transpose();
    R.row(1) = down.transpose();
    R.row(2) = fwd.transpose();
    return R;
}

} // namespace

StemGaussians make_stem(const StemParams& p) {
    if (!(p.dbh_cm > 0)) throw ConfigError("stem dbh_cm must be > 0");
    if (p.taper_slope > 0) throw ConfigError("stem taper_slope must be <= 0");
    if (!(p.gaussian_spacing > 0)) throw ConfigError("gaussian_spacing must be > 0");
    if (!(p.height_m > 0)) throw ConfigError("stem height must be > 0");

    const double r_bh = p.dbh_cm / 200.0;
    auto radius_at = [&](double h) { return r_bh + p.taper_slope * (h - p.breast_height); };
    if (radius_at(p.height_m) <= std::max(0.005, p.surface_sigma))
        throw ConfigError("taper pinches the stem off below its top");

    // count first so a bad spacing fails before allocation
    std::size_t count = 0;
    const int rings = static_cast<int>(std::floor(p.height_m / p.gaussian_spacing)) + 1;
    for (int k = 0; k < rings; ++k) {
        const double r = radius_at(k * p.gaussian_spacing);
        count += static_cast<std::size_t>(
            std::max<long>(6, std::lround(kTwoPi * r / p.gaussian_spacing)));
    }
    if (count > 1000000)
        throw ConfigError("stem would need " + std::to_string(count) + " Gaussians (max 1e6)");

    StemGaussians out;
    const double sigma_c = p.circumferential_factor * p.gaussian_spacing;
    const double sigma_v = p.vertical_factor * p.gaussian_spacing;
    for (int k = 0; k < rings; ++k) {
        const double h = k * p.gaussian_spacing;
        const double r = radius_at(h);
        const int n_theta =
            static_cast<int>(std::max<long>(6, std::lround(kTwoPi * r / p.gaussian_spacing)));
        const double offset = (k % 2) * kTwoPi / (2.0 * n_theta); // stagger alternate rings
        for (int j = 0; j < n_theta; ++j) {
            const double theta = offset + j * kTwoPi / n_theta;
            const Vec3 radial(std::cos(theta), std::sin(theta), 0.0);
            const Vec3 circum(-std::sin(theta), std::cos(theta), 0.0);
            Mat3 rot;
            rot.col(0) = radial;
            rot.col(1) = circum;
            rot.col(2) = Vec3::UnitZ();
            const Vec3 mean(p.axis_xy.x() + r * radial.x(), p.axis_xy.y() + r * radial.y(),
                            p.base_z + h);
            push_gaussian(out.field, mean, Vec3(p.surface_sigma, sigma_c, sigma_v), Quat(rot),
                          p.alpha);
        }
    }
    out.field.activate();

    out.truth.tree_id = p.tree_id;
    out.truth.dbh_cm = p.dbh_cm;
    out.truth.taper_beta1_m = 2.0 * p.taper_slope;
    out.truth.taper_beta0_m = p.dbh_cm / 100.0 - out.truth.taper_beta1_m * p.breast_height;
    out.truth.height_m = p.height_m;
    out.truth.axis_xy = p.axis_xy;
    out.truth.base_z = p.base_z;
    return out;
}

SyntheticScene make_plot(const PlotParams& p) {
    if (p.n_stems < 0) throw ConfigError("n_stems must be >= 0");
    if (p.clutter_fraction < 0 || p.clutter_fraction >= 1)
        throw ConfigError("clutter_fraction must lie in [0, 1)");
    if (p.camera_count < 1) throw ConfigError("camera_count must be >= 1");

    SyntheticScene scene;
    scene.seed = p.seed;
    scene.plot_id = p.plot_id;
    scene.base_elevation = p.base_elevation;
    scene.slope_gradient = p.terrain == TerrainKind::sloped ? p.slope_gradient : 0.0;

    RngStream rng = derive_stream(p.seed, rng_tag::kSynth, static_cast<std::uint64_t>(p.plot_id));

    // stems: rejection-sampled non-overlapping axes inside the plot circle
    std::vector<Vec2> placed;
    const int max_attempts = 200 * std::max(1, p.n_stems);
    int attempts = 0;
    while (static_cast<int>(placed.size()) < p.n_stems) {
        if (++attempts > max_attempts)
            throw ConfigError("stem placement infeasible after " + std::to_string(max_attempts) +
                              " attempts");
        const double rr = (p.plot_radius - 1.0) * std::sqrt(rng.next_double());
        const double th = kTwoPi * rng.next_double();
        const Vec2 pos(rr * std::cos(th), rr * std::sin(th));
        bool ok = true;
        for (const auto& other : placed)
            if ((pos - other).norm() < p.min_stem_separation) ok = false;
        if (!ok) continue;
        placed.push_back(pos);

        StemParams sp;
        sp.tree_id = static_cast<int>(placed.size());
        sp.axis_xy = pos;
        sp.base_z = scene.ground_at(pos.x(), pos.y());
        sp.dbh_cm = rng.uniform(p.dbh_min_cm, p.dbh_max_cm);
        sp.taper_slope = rng.uniform(p.slope_min, p.slope_max);
        sp.height_m = rng.uniform(p.height_min, p.height_max);
        // thin, strongly tapered stems are shorter, so the radius stays positive
        if (sp.taper_slope < 0) {
            const double r_bh = sp.dbh_cm / 200.0;
            sp.height_m = std::min(sp.height_m, sp.breast_height + (r_bh - 0.03) / -sp.taper_slope);
        }
        sp.alpha = rng.uniform(0.7, 0.99);
        sp.gaussian_spacing = p.gaussian_spacing;
        sp.surface_sigma = p.surface_sigma;
        sp.circumferential_factor = p.circumferential_factor;
        sp.vertical_factor = p.vertical_factor;
        sp.breast_height = p.breast_height;

        StemGaussians stem = make_stem(sp);
        append_field(scene.field, stem.field);
        scene.gaussian_tree.insert(scene.gaussian_tree.end(), stem.field.size(), sp.tree_id);
        scene.truths.push_back(stem.truth);

        FieldInventory::Row row;
        row.plot = p.plot_id;
        row.tree = sp.tree_id;
        row.dbh_cm = sp.dbh_cm;
        row.position = pos;
        scene.inventory.rows.push_back(row);
    }

    // floaters: low-alpha blobs in free space
    const std::size_t n_stem_gaussians = scene.field.means.size();
    const std::size_t n_clutter = static_cast<std::size_t>(std::llround(
        p.clutter_fraction / (1.0 - p.clutter_fraction) * static_cast<double>(n_stem_gaussians)));
    for (std::size_t i = 0; i < n_clutter; ++i) {
        const double rr = p.plot_radius * std::sqrt(rng.next_double());
        const double th = kTwoPi * rng.next_double();
        const double x = rr * std::cos(th), y = rr * std::sin(th);
        const double z = scene.ground_at(x, y) + rng.uniform(0.3, 8.0);
        const Vec3 scale(rng.uniform(p.clutter_scale_min, p.clutter_scale_max),
                         rng.uniform(p.clutter_scale_min, p.clutter_scale_max),
                         rng.uniform(p.clutter_scale_min, p.clutter_scale_max));
        Quat q(rng.next_normal(), rng.next_normal(), rng.next_normal(), rng.next_normal());
        q.normalize();
        push_gaussian(scene.field, Vec3(x, y, z), scale, q,
                      rng.uniform(p.clutter_alpha_min, p.clutter_alpha_max));
        scene.gaussian_tree.push_back(0);
    }
    if (!scene.field.means.empty()) scene.field.activate();

    // terrain grid sampled from the analytic ground plane
    const int cells = static_cast<int>(std::lround(2.0 * p.terrain_half_extent / p.terrain_cell));
    scene.terrain.ncols = cells;
    scene.terrain.nrows = cells;
    scene.terrain.cell = p.terrain_cell;
    scene.terrain.x0 = -p.terrain_half_extent;
    scene.terrain.y0 = -p.terrain_half_extent;
    scene.terrain.z.resize(static_cast<std::size_t>(cells) * cells);
    for (int r = 0; r < cells; ++r)
        for (int c = 0; c < cells; ++c) {
            const double cx = scene.terrain.x0 + (c + 0.5) * p.terrain_cell;
            scene.terrain.z[static_cast<std::size_t>(r) * cells + c] = scene.ground_at(cx, 0.0);
        }

    // overhead camera ring looking at the plot center
    const double ground0 = scene.ground_at(0.0, 0.0);
    const Vec3 target(0.0, 0.0, ground0 + p.target_height);
    for (int i = 0; i < p.camera_count; ++i) {
        const double phi = kTwoPi * i / p.camera_count;
        const Vec3 pos(p.ring_radius * std::cos(phi), p.ring_radius * std::sin(phi),
                       ground0 + p.ring_altitude);
        CameraView v;
        char name[32];
        std::snprintf(name, sizeof(name), "cam_%03d.png", i);
        v.id = name;
        v.width = p.image_width;
        v.height = p.image_height;
        v.fx = v.fy = p.focal_px;
        v.cx = p.image_width / 2.0;
        v.cy = p.image_height / 2.0;
        v.R = look_at_world_to_cam(pos, target);
        v.t = -v.R * pos;
        scene.rig.views.push_back(std::move(v));
    }

    return scene;
}

void SyntheticScene::write(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    save_gaussian_field(field, dir / "splats.ply");
    save_cameras(rig, dir);
    save_terrain(terrain, dir / "terrain.asc");
    save_inventory(inventory, dir / "inventory.csv");
    {
        std::ofstream out(dir / "gaussian_labels.csv");
        if (!out) throw IoError("cannot write gaussian_labels.csv");
        out << "gaussian_index,tree_id\n";
        for (std::size_t i = 0; i < gaussian_tree.size(); ++i)
            if (gaussian_tree[i] > 0) out << i << "," << gaussian_tree[i] << "\n";
    }
    {
        std::ofstream out(dir / "truth.csv");
        if (!out) throw IoError("cannot write truth.csv");
        out << "plot,tree,dbh_cm,taper_beta0_m,taper_beta1_m,height_m,x,y\n";
        char buf[256];
        for (const auto& t : truths) {
            std::snprintf(buf, sizeof(buf), "%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", plot_id,
                          t.tree_id, t.dbh_cm, t.taper_beta0_m, t.taper_beta1_m, t.height_m,
                          t.axis_xy.x(), t.axis_xy.y());
            out << buf;
        }
    }
}

} // namespace stemsplat
