// Copyright (c) 2026 stemsplat authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "stemsplat/geometry.hpp"
#include "stemsplat/rng.hpp"
#include "stemsplat/trunk_prep.hpp"

#include <optional>
#include <string>
#include <vector>

namespace stemsplat {

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

struct SlicingParams {
    double thickness = 1.0; // slab height H, meters
    double spacing = 0.1;   // slice center spacing, meters
    int min_points = 5;     // slices with fewer members are dropped
};

struct CircleRansacParams {
    int hypotheses = 2000;
    double min_inlier_fraction = 0.1;
    double r_min = 0.02;          // meters
    double r_max = 1.0;           // meters
    double radius_exponent = 0.6; // p in the score sum_w_inside / r^p
};

struct TaperParams {
    double residual_m = 0.02; // inlier threshold on |d - (b0 + b1 h)|
    int trials = 1000;
    int min_samples = 3;
    int min_inliers = 10;
    double initial_window_m = 3.0; // first height window before expansion
};

struct CylinderParams {
    int trials = 500;
    double inlier_band_m = 0.02;    // |distance-to-surface| threshold
    double min_inlier_ratio = 0.4;  // support floor for an acceptable cylinder
    double gm_sigma_m = 0.02;       // Geman-McClure scale
    double max_tilt_rad = 3.14159265358979323846 / 8.0;
    double max_radius_m = 0.5;
    int max_refine_iterations = 100;
    double step_tolerance = 1e-5;   // stop when the 7-vector update norm drops below
};

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

struct Slice {
    int id = 0;              // slice index s, center at s * spacing
    double h_center = 0;     // meters above ground
    std::vector<Vec2> q;     // member points, (x, y)
    std::vector<double> w;   // member weights (reliability)
    std::size_t size() const { return q.size(); }
};

struct SliceSet {
    std::vector<Slice> slices;
    double thickness = 1.0;
    double spacing = 0.1;
};

struct CircleEstimate {
    Vec2 center = Vec2::Zero();
    double radius = 0;
    double score = 0;
    double inlier_fraction = 0;
    int hypotheses = 0;
    double diameter() const { return 2.0 * radius; }
};

struct TaperModel {
    double beta0 = 0; // diameter intercept, meters
    double beta1 = 0; // diameter slope, m/m; always negative
    std::vector<int> inlier_slices; // slice ids
    double residual_m = 0;
    double window_h_max = 0; // height window the model was accepted at
};

struct CylinderEstimate {
    Vec3 point_on_axis = Vec3::Zero();
    Vec3 axis = Vec3::UnitZ();
    double radius = 0;
    double inlier_ratio = 0;
};

struct SliceDiameter {
    int slice_id = 0;
    double h = 0;
    double d = 0; // meters
};

struct DbhRecord {
    int tree_id = 0;
    std::string method; // circle-weighted | circle-unweighted | cylinder
    bool success = false;
    double dbh_cm = 0;
    double h_bh = 0;
    std::string failure_reason;

    struct Diagnostics {
        int candidate_slices = 0; // slices surviving the member minimum
        int fitted_slices = 0;    // slices with a valid circle estimate
        int taper_inliers = 0;
        double window_h_max = 0;
        std::vector<SliceDiameter> slice_diameters;
        std::vector<int> taper_inlier_ids;
    } diagnostics;
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Overlapping horizontal slabs over height-above-ground. A point belongs to
/// every slice with |h - h_s| <= thickness/2, so slabs share points whenever
/// thickness > spacing.
SliceSet build_slices(const TrunkInstance& instance, const SlicingParams& params);

/// Exact circumcircle through three points, solved in algebraic form after
/// subtracting the centroid. nullopt for (near-)collinear triples.
std::optional<std::pair<Vec2, double>> fit_circle_3pt(const Vec2& q1, const Vec2& q2,
                                                      const Vec2& q3);

/// Solid-disk RANSAC over one slice: hypotheses are circumcircles of three
/// weight-proportionally sampled members, inliers are points *inside* the
/// disk, and the winning hypothesis maximizes
///     S = (sum of inlier weights) / r^p.
/// Unweighted mode treats every weight as 1. Ties prefer the smaller radius,
/// then the earlier hypothesis. nullopt when no hypothesis satisfies the
/// radius bounds and inlier fraction.
std::optional<CircleEstimate> ransac_solid_circle(const Slice& slice,
                                                  const CircleRansacParams& params, bool weighted,
                                                  RngStream& rng);

/// Robust line fit d(h) = b0 + b1 h over per-slice diameters with a negative
/// slope constraint. Runs RANSAC inside height windows [0, h_max] that start
/// at initial_window_m and grow by `spacing` until the inlier id set repeats
/// across two consecutive windows; if no window ever stabilizes, the last
/// valid window's model is used. nullopt when no window admits a valid model.
std::optional<TaperModel> fit_taper(const std::vector<SliceDiameter>& diameters,
                                    const TaperParams& params, double spacing, RngStream& rng);

/// DBH = d(h_bh) from an accepted taper model. Fails on a non-positive value.
DbhRecord evaluate_dbh(const TaperModel& taper, double h_bh, int tree_id,
                       const std::string& method);

/// Vertical-cylinder baseline over the whole instance, ignoring weights.
/// RANSAC rounds estimate the axis from the covariance eigenvector nearest
/// vertical over five samples and the radius as their mean axis distance;
/// the best-count model is refined by Geman-McClure reweighted least squares
/// over (center, axis rotation, radius). The refined model replaces the
/// RANSAC one only when it keeps the validity gates and does not lower the
/// inlier ratio.
std::optional<CylinderEstimate> fit_cylinder_baseline(const std::vector<Vec3>& points,
                                                      const CylinderParams& params,
                                                      RngStream& rng);

// ---------------------------------------------------------------------------
// Per-tree drivers
// ---------------------------------------------------------------------------

struct StemFitConfig {
    SlicingParams slicing;
    CircleRansacParams circle;
    TaperParams taper;
    CylinderParams cylinder;
    double h_bh = 1.37; // breast height, meters above ground
    int threads = 0;
};

/// Slice + per-slice solid-circle RANSAC + taper regression + DBH readout.
DbhRecord estimate_dbh_circle(const TrunkInstance& instance, const StemFitConfig& cfg,
                              bool weighted, std::uint64_t seed);

/// Cylinder-fit baseline; DBH = 2r of the selected cylinder.
DbhRecord estimate_dbh_cylinder(const TrunkInstance& instance, const StemFitConfig& cfg,
                                std::uint64_t seed);

} // namespace stemsplat
