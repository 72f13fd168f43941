// Copyright (c) 2026 stemsplat authors
// SPDX-License-Identifier: Apache-2.0

#include "stemsplat/trunk_prep.hpp"

#include "stemsplat/errors.hpp"

#include <algorithm>
#include <fstream>
#include <map>

namespace stemsplat {

Vec2 TrunkInstance::centroid_xy() const {
    Vec2 c = Vec2::Zero();
    for (const auto& p : points) c += p.head<2>();
    return c / static_cast<double>(points.size());
}

std::vector<TrunkInstance> split_instances(const ScoredPointCloud& cloud,
                                           const TrunkLabelSet& labels) {
    for (const auto& [idx, tree] : labels.labels)
        if (idx >= cloud.size())
            throw DataError("trunk label references point " + std::to_string(idx) +
                            " beyond cloud size " + std::to_string(cloud.size()));

    std::map<int, TrunkInstance> by_tree;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const auto tree = labels.tree_of(i);
        if (!tree) continue;
        auto& inst = by_tree[*tree];
        inst.tree_id = *tree;
        inst.points.push_back(cloud.points[i]);
        inst.reliability.push_back(cloud.reliability[i]);
    }

    std::vector<TrunkInstance> out;
    out.reserve(by_tree.size());
    for (auto& [tree, inst] : by_tree) out.push_back(std::move(inst));
    return out;
}

TrunkInstance attach_ground(TrunkInstance instance, const TerrainModel& terrain, bool bilinear) {
    if (instance.points.empty())
        throw DataError("cannot attach ground to an empty instance");
    const Vec2 c = instance.centroid_xy();
    if (!terrain.in_padded_bounds(c.x(), c.y()))
        throw GroundLookupError(instance.tree_id,
                                "tree " + std::to_string(instance.tree_id) +
                                    " centroid lies outside the terrain grid");
    const auto z = bilinear ? terrain.bilinear(c.x(), c.y()) : terrain.nearest(c.x(), c.y());
    if (!z)
        throw GroundLookupError(instance.tree_id, "tree " + std::to_string(instance.tree_id) +
                                                      " centroid falls on nodata terrain");
    instance.ground_z = *z;
    instance.heights.resize(instance.points.size());
    for (std::size_t i = 0; i < instance.points.size(); ++i)
        instance.heights[i] = instance.points[i].z() - instance.ground_z;
    return instance;
}

void save_instance_ply(const TrunkInstance& instance, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << "ply\nformat binary_little_endian 1.0\n";
    out << "element vertex " << instance.size() << "\n";
    out << "property float x\nproperty float y\nproperty float z\n";
    out << "property float reliability\nproperty float height\n";
    out << "end_header\n";
    for (std::size_t i = 0; i < instance.size(); ++i) {
        const float row[5] = {static_cast<float>(instance.points[i].x()),
                              static_cast<float>(instance.points[i].y()),
                              static_cast<float>(instance.points[i].z()), instance.reliability[i],
                              instance.heights.empty() ? 0.0f
                                                       : static_cast<float>(instance.heights[i])};
        out.write(reinterpret_cast<const char*>(row), sizeof(row));
    }
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

} // namespace stemsplat
