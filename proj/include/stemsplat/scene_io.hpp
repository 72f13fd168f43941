// Copyright (c) 2026 stemsplat authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "stemsplat/errors.hpp"
#include "stemsplat/geometry.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace stemsplat {

// ---------------------------------------------------------------------------
// GaussianField
// ---------------------------------------------------------------------------

/// An optimized splat scene. Raw storage mirrors the splat PLY layout
/// (log scales, logit opacity, unnormalized quaternion) so that
/// save(load(f)) round-trips bit-exactly; the activated views below are
/// computed once on load and are what all downstream math consumes.
struct GaussianField {
    // raw, as stored on disk
    std::vector<Vec3> means;
    std::vector<Vec3> log_scales;
    std::vector<Eigen::Vector4d> rotations_raw; // (w, x, y, z), any norm
    std::vector<double> logit_opacities;
    std::size_t color_dim = 0;          // floats per Gaussian; 0 if absent
    std::vector<float> color_features;  // opaque blob, size() == size * color_dim

    // activated on load
    std::vector<Vec3> scales;      // exp(log_scale), componentwise
    std::vector<double> alphas;    // sigmoid(logit_opacity)
    std::vector<Quat> rotations;   // unit quaternions

    std::size_t size() const { return means.size(); }

    /// Rebuild the activated vectors from the raw ones. Loaders call this;
    /// call it yourself after constructing a field by hand.
    void activate();

    Mat3 rotation_matrix(std::size_t i) const { return rotations[i].toRotationMatrix(); }

    /// World-frame covariance R diag(s^2) R^T of Gaussian i.
    Mat3 covariance(std::size_t i) const;
};

GaussianField load_gaussian_field(const std::filesystem::path& path);
void save_gaussian_field(const GaussianField& field, const std::filesystem::path& path,
                         bool binary = true);

/// Similarity transform p' = scale * R p + t, for scenes stored in a
/// non-metric or non-z-up convention. Applying the same transform to a field
/// and its rig leaves every projection unchanged while ray distances scale
/// uniformly.
struct WorldTransform {
    double scale = 1.0;
    Quat rotation = Quat::Identity();
    Vec3 translation = Vec3::Zero();

    /// Parse "scale,qw,qx,qy,qz,tx,ty,tz".
    static WorldTransform parse(const std::string& spec);
};

void apply_world_transform(GaussianField& field, const WorldTransform& tf);

// ---------------------------------------------------------------------------
// CameraRig
// ---------------------------------------------------------------------------

/// One calibrated pinhole view. R, t map world to camera
/// (x_cam = R * x_world + t); the camera looks down +z, x right, y down.
struct CameraView {
    std::string id;
    int width = 0;
    int height = 0;
    double fx = 0, fy = 0, cx = 0, cy = 0;
    Mat3 R = Mat3::Identity();
    Vec3 t = Vec3::Zero();

    Vec3 to_camera(const Vec3& p) const { return R * p + t; }

    /// Pixel coordinates of a camera-frame point (z > 0 assumed).
    Vec2 pixel_of(const Vec3& cam) const {
        return {fx * cam.x() / cam.z() + cx, fy * cam.y() / cam.z() + cy};
    }

    bool pixel_inside(const Vec2& u) const {
        return u.x() >= 0.0 && u.y() >= 0.0 && u.x() < width && u.y() < height;
    }

    /// Unit viewing direction (world frame) of the optical axis.
    Vec3 forward_world() const { return R.row(2).transpose(); }

    Vec3 center_world() const { return -R.transpose() * t; }
};

struct CameraRig {
    std::vector<CameraView> views;
    std::size_t size() const { return views.size(); }
};

/// Reads COLMAP-style text poses from `dir/cameras.txt` + `dir/images.txt`.
/// Only PINHOLE and SIMPLE_PINHOLE camera models are accepted.
CameraRig load_cameras(const std::filesystem::path& dir);
void save_cameras(const CameraRig& rig, const std::filesystem::path& dir);

void apply_world_transform(CameraRig& rig, const WorldTransform& tf);

// ---------------------------------------------------------------------------
// TerrainModel
// ---------------------------------------------------------------------------

/// Regular elevation grid (ESRI ASCII). Stored bottom-up: cell (0, 0) is the
/// south-west corner, cell centers at (x0 + (c + 0.5) dx, y0 + (r + 0.5) dx).
struct TerrainModel {
    int ncols = 0;
    int nrows = 0;
    double x0 = 0, y0 = 0; // lower-left corner
    double cell = 1.0;
    double nodata = -9999.0;
    std::vector<double> z; // row-major, row 0 = south

    double at(int col, int row) const { return z[static_cast<std::size_t>(row) * ncols + col]; }

    /// True when (x, y) lies within the grid extent padded by one cell.
    bool in_padded_bounds(double x, double y) const;

    /// Elevation of the nearest cell; queries exactly on a cell boundary
    /// resolve to the lower-indexed cell. nullopt on nodata.
    std::optional<double> nearest(double x, double y) const;

    /// Bilinear interpolation between cell centers (clamped at edges);
    /// nullopt if any participating cell is nodata.
    std::optional<double> bilinear(double x, double y) const;
};

TerrainModel load_terrain(const std::filesystem::path& path);
void save_terrain(const TerrainModel& terrain, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// FieldInventory
// ---------------------------------------------------------------------------

/// Field-measured reference diameters, keyed by (plot, tree).
struct FieldInventory {
    struct Row {
        int plot = 0;
        int tree = 0;
        double dbh_cm = 0;
        std::optional<Vec2> position;
    };
    std::vector<Row> rows;

    const Row* find(int plot, int tree) const;
};

FieldInventory load_inventory(const std::filesystem::path& path);
void save_inventory(const FieldInventory& inventory, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// TrunkLabelSet
// ---------------------------------------------------------------------------

/// point index -> tree instance id; points absent from the map are non-trunk.
struct TrunkLabelSet {
    std::unordered_map<std::uint64_t, int> labels;

    std::size_t size() const { return labels.size(); }
    std::optional<int> tree_of(std::uint64_t point_index) const {
        auto it = labels.find(point_index);
        if (it == labels.end()) return std::nullopt;
        return it->second;
    }
};

TrunkLabelSet load_trunk_labels(const std::filesystem::path& path);
void save_trunk_labels(const TrunkLabelSet& labels, const std::filesystem::path& path);

} // namespace stemsplat
