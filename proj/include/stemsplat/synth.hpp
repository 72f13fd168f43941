// Copyright (c) 2026 stemsplat authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "stemsplat/scene_io.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace stemsplat {

/// Planted ground truth for one stem. The diameter profile is the line
/// d(h) = taper_beta0 + taper_beta1 * h (meters), and dbh_cm is d at breast
/// height by construction.
struct StemTruth {
    int tree_id = 0;
    double dbh_cm = 0;
    double taper_beta0_m = 0;
    double taper_beta1_m = 0; // <= 0
    double height_m = 0;
    Vec2 axis_xy = Vec2::Zero();
    double base_z = 0;
};

struct StemParams {
    double dbh_cm = 30.0;
    double taper_slope = -0.005; // radius change per meter of height, <= 0
    double height_m = 11.0;
    double gaussian_spacing = 0.08; // ring and in-ring spacing, meters
    double surface_sigma = 0.0025;  // radial (surface-normal) Gaussian scale
    // tangential scales tied to the ring spacing; the vertical axis is kept
    // tight so the depth test stays sharp under oblique views
    double circumferential_factor = 0.15;
    double vertical_factor = 0.05;
    double alpha = 0.9;
    double breast_height = 1.37;
    Vec2 axis_xy = Vec2::Zero();
    double base_z = 0.0;
    int tree_id = 1;
};

struct StemGaussians {
    GaussianField field;
    StemTruth truth;
};

/// Dress a tapered cylinder in surface Gaussians: rings of splats whose
/// minor axis points radially (scale surface_sigma) and whose tangential
/// scales match the ring spacing. Deterministic; throws on a spacing that
/// would need more than 1e6 Gaussians or a taper that pinches off below the
/// stem top.
StemGaussians make_stem(const StemParams& params);

enum class TerrainKind { flat, sloped };

struct PlotParams {
    int n_stems = 10;
    double clutter_fraction = 0.2; // fraction of all Gaussians that are floaters
    int camera_count = 12;
    TerrainKind terrain = TerrainKind::flat;
    std::uint64_t seed = 1;
    int plot_id = 1;

    double plot_radius = 16.05;
    double breast_height = 1.37;
    double min_stem_separation = 3.0;

    // per-stem draws
    double dbh_min_cm = 18.0, dbh_max_cm = 40.0;
    double slope_min = -0.006, slope_max = -0.003; // radius m/m
    double height_min = 10.0, height_max = 13.0;
    double gaussian_spacing = 0.08;
    double surface_sigma = 0.0025;
    double circumferential_factor = 0.15;
    double vertical_factor = 0.05;

    // clutter draws
    double clutter_alpha_min = 0.05, clutter_alpha_max = 0.4;
    double clutter_scale_min = 0.05, clutter_scale_max = 0.25;

    // overhead camera ring with oblique pitch
    int image_width = 1000, image_height = 750;
    double focal_px = 1400.0;
    double ring_radius = 45.0;
    double ring_altitude = 28.0; // above plot-center ground
    double target_height = 2.0;  // aim point above plot-center ground

    // terrain grid
    double terrain_half_extent = 20.0;
    double terrain_cell = 0.5;
    double base_elevation = 100.0;
    double slope_gradient = 0.1; // dz/dx for TerrainKind::sloped
};

struct SyntheticScene {
    GaussianField field;
    CameraRig rig;
    TerrainModel terrain;
    std::vector<StemTruth> truths;
    std::vector<int> gaussian_tree; // per Gaussian: tree id, or 0 for clutter
    FieldInventory inventory;
    std::uint64_t seed = 0;
    int plot_id = 1;
    double base_elevation = 100.0;
    double slope_gradient = 0.0; // 0 for flat terrain

    /// Ground elevation the generator used at (x, y); the grid samples this.
    double ground_at(double x, double y) const {
        return base_elevation + slope_gradient * x;
    }

    /// Write splats.ply, cameras.txt/images.txt, terrain.asc, inventory.csv,
    /// gaussian_labels.csv and truth.csv into a directory. Byte-identical for
    /// identical scenes.
    void write(const std::filesystem::path& dir) const;
};

/// A full synthetic plot: non-overlapping stems inside the plot circle,
/// optional low-alpha floater clutter, a camera ring, and a terrain grid.
SyntheticScene make_plot(const PlotParams& params);

} // namespace stemsplat
