// Copyright (c) 2026 stemsplat authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "stemsplat/opacity_integral.hpp"
#include "stemsplat/scene_io.hpp"

#include <filesystem>
#include <vector>

namespace stemsplat {

/// Trunk-labeled points of one tree, in height-above-ground coordinates once
/// a terrain model has been attached.
struct TrunkInstance {
    int tree_id = 0;
    std::vector<Vec3> points;        // absolute world coordinates
    std::vector<float> reliability;
    double ground_z = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> heights;     // z - ground_z, filled by attach_ground

    std::size_t size() const { return points.size(); }
    Vec2 centroid_xy() const;
};

/// Partition a scored cloud by the external trunk labels. Unlabeled points
/// are discarded; point order within an instance follows cloud order;
/// instances come out sorted by tree id. Tree ids with no points do not
/// appear.
std::vector<TrunkInstance> split_instances(const ScoredPointCloud& cloud,
                                           const TrunkLabelSet& labels);

/// Resolve ground elevation at the instance centroid and fill heights.
/// Nearest-cell lookup by default; bilinear when requested. Centroids over
/// nodata or beyond the padded grid bounds raise GroundLookupError with the
/// tree id.
TrunkInstance attach_ground(TrunkInstance instance, const TerrainModel& terrain,
                            bool bilinear = false);

/// Inspection dump: binary PLY with float x, y, z, reliability, height.
void save_instance_ply(const TrunkInstance& instance, const std::filesystem::path& path);

} // namespace stemsplat
