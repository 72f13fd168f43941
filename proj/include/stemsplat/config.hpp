// Copyright (c) 2026 stemsplat authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "stemsplat/opacity_integral.hpp"
#include "stemsplat/rasterizer.hpp"
#include "stemsplat/stem_fit.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace stemsplat {

/// Every tunable of the pipeline with its default. A config can be loaded
/// from a key=value file and overridden by CLI flags; the canonical
/// serialization (and its hash) is echoed into run outputs for provenance.
/// `threads` is an execution detail and stays out of both.
struct RunConfig {
    // candidate sampling and multi-view scoring
    int draws_per_splat = 100;
    double tau = 0.5;
    double tau_mask = 0.1;
    double mahalanobis_gate = 6.0;
    bool dense = false;

    // renderer
    double alpha_cap = 0.99;
    double eps_alpha = 1.0 / 255.0;
    double t_stop = 1e-4;
    double eigen_floor_px2 = 0.3;
    double footprint_sigma = 3.5;
    double near_clip = 0.2;
    int tile_size = 16;

    // slicing and solid-circle RANSAC
    double slice_thickness = 1.0;
    double slice_spacing = 0.1;
    int slice_min_points = 5;
    int circle_hypotheses = 2000;
    double min_inlier_fraction = 0.1;
    double r_min = 0.02;
    double r_max = 1.0;
    double radius_exponent = 0.6;

    // taper regression
    double taper_residual = 0.02;
    int taper_trials = 1000;
    int taper_min_samples = 3;
    int taper_min_inliers = 10;
    double taper_initial_window = 3.0;

    // cylinder baseline
    int cylinder_trials = 500;
    double cylinder_inlier_band = 0.02;
    double cylinder_min_inlier_ratio = 0.4;
    double cylinder_gm_sigma = 0.02;

    // shared
    double h_bh = 1.37;
    std::uint64_t seed = 1;
    std::string method = "circle-w"; // circle-w | circle-nw | cylinder
    bool bilinear_ground = false;
    int plot_id = 1;
    int threads = 0; // 0 = hardware concurrency; not part of the hash

    void validate() const; // throws ConfigError naming the offending field

    /// Canonical key=value serialization, one key per line, fixed order.
    std::string serialize() const;

    /// FNV-1a hash of serialize(), as 16 hex digits.
    std::string hash() const;

    /// Apply key=value pairs from a config file; unknown keys are errors.
    void apply_file(const std::filesystem::path& path);

    RenderConfig render_config() const;
    ScoreConfig score_config() const;
    StemFitConfig stem_fit_config() const;
};

} // namespace stemsplat
