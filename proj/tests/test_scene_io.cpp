// Copyright (c) 2026 stemsplat authors
// SPDX-License-Identifier: Apache-2.0

#include "stemsplat/scene_io.hpp"
#include "stemsplat/synth.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

using namespace stemsplat;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    static int counter = 0;
    const fs::path dir = fs::temp_directory_path() / ("stemsplat_io_" + std::to_string(counter++));
    fs::create_directories(dir);
    return dir;
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

const char* kAsciiSplatHeader =
    "ply\n"
    "format ascii 1.0\n"
    "element vertex 1\n"
    "property float x\nproperty float y\nproperty float z\n"
    "property float opacity\n"
    "property float scale_0\nproperty float scale_1\nproperty float scale_2\n"
    "property float rot_0\nproperty float rot_1\nproperty float rot_2\nproperty float rot_3\n"
    "end_header\n";

} // namespace

TEST_CASE("splat PLY: activation of a one-Gaussian file") {
    const fs::path dir = temp_dir();
    // zero logit -> alpha 0.5; zero log-scales -> unit scales; identity rotation
    write_file(dir / "one.ply", std::string(kAsciiSplatHeader) + "1 2 3 0 0 0 0 1 0 0 0\n");
    const GaussianField f = load_gaussian_field(dir / "one.ply");
    REQUIRE(f.size() == 1);
    CHECK(f.alphas[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK((f.scales[0] - Vec3(1, 1, 1)).norm() < 1e-12);
    CHECK((f.means[0] - Vec3(1, 2, 3)).norm() < 1e-12);
    CHECK((f.rotations[0].toRotationMatrix() - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("splat PLY: missing property is named in the error") {
    const fs::path dir = temp_dir();
    std::string header(kAsciiSplatHeader);
    const auto pos = header.find("property float rot_3\n");
    header.erase(pos, std::string("property float rot_3\n").size());
    write_file(dir / "bad.ply", header + "1 2 3 0 0 0 0 1 0 0\n");
    try {
        load_gaussian_field(dir / "bad.ply");
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("rot_3") != std::string::npos);
    }
}

TEST_CASE("splat PLY: non-finite value carries the element index") {
    const fs::path dir = temp_dir();
    std::string body = "1 2 3 0 0 0 0 1 0 0 0\nnan 2 3 0 0 0 0 1 0 0 0\n";
    std::string header(kAsciiSplatHeader);
    header.replace(header.find("element vertex 1"), std::string("element vertex 1").size(),
                   "element vertex 2");
    write_file(dir / "nan.ply", header + body);
    try {
        load_gaussian_field(dir / "nan.ply");
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("1") != std::string::npos);
    }
}

TEST_CASE("splat PLY: synthetic stem round-trips bit-exactly through save/load") {
    const fs::path dir = temp_dir();
    StemParams p;
    p.height_m = 0.5;
    p.gaussian_spacing = 0.2;
    const StemGaussians stem = make_stem(p);
    REQUIRE(stem.field.size() >= 3);

    save_gaussian_field(stem.field, dir / "a.ply");
    const GaussianField a = load_gaussian_field(dir / "a.ply");
    save_gaussian_field(a, dir / "b.ply");
    const GaussianField b = load_gaussian_field(dir / "b.ply");

    CHECK(read_file(dir / "a.ply") == read_file(dir / "b.ply"));
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK((a.means[i] - b.means[i]).norm() == 0.0);
        CHECK((a.log_scales[i] - b.log_scales[i]).norm() == 0.0);
        CHECK((a.rotations_raw[i] - b.rotations_raw[i]).norm() == 0.0);
        CHECK(a.logit_opacities[i] == b.logit_opacities[i]);
    }
}

TEST_CASE("splat PLY: loading preserves file order and extra properties are skipped") {
    const fs::path dir = temp_dir();
    std::string header =
        "ply\nformat ascii 1.0\nelement vertex 2\n"
        "property float nx\n" // ignored
        "property float x\nproperty float y\nproperty float z\n"
        "property float opacity\n"
        "property float scale_0\nproperty float scale_1\nproperty float scale_2\n"
        "property float rot_0\nproperty float rot_1\nproperty float rot_2\nproperty float rot_3\n"
        "end_header\n";
    write_file(dir / "two.ply",
               header + "9 1 0 0 0 0 0 0 1 0 0 0\n9 2 0 0 0 0 0 0 1 0 0 0\n");
    const GaussianField f = load_gaussian_field(dir / "two.ply");
    REQUIRE(f.size() == 2);
    CHECK(f.means[0].x() == 1.0);
    CHECK(f.means[1].x() == 2.0);
}

TEST_CASE("splat PLY: empty field is rejected") {
    const fs::path dir = temp_dir();
    std::string header(kAsciiSplatHeader);
    header.replace(header.find("element vertex 1"), std::string("element vertex 1").size(),
                   "element vertex 0");
    write_file(dir / "empty.ply", header);
    CHECK_THROWS_AS(load_gaussian_field(dir / "empty.ply"), DataError);
}

TEST_CASE("cameras: identity and half-turn quaternions") {
    const fs::path dir = temp_dir();
    write_file(dir / "cameras.txt", "1 PINHOLE 640 480 500 500 320 240\n");
    write_file(dir / "images.txt",
               "1 1 0 0 0 0 0 0 1 a.png\n\n"
               "2 0 0 0 1 1 2 3 1 b.png\n\n");
    const CameraRig rig = load_cameras(dir);
    REQUIRE(rig.size() == 2);
    CHECK((rig.views[0].R - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(rig.views[0].t.norm() == 0.0);
    Mat3 half_turn_z;
    half_turn_z << -1, 0, 0, 0, -1, 0, 0, 0, 1;
    CHECK((rig.views[1].R - half_turn_z).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((rig.views[1].t - Vec3(1, 2, 3)).norm() < 1e-12);
    CHECK(rig.views[1].id == "b.png");
}

TEST_CASE("cameras: dangling id and unsupported model") {
    const fs::path dir = temp_dir();
    write_file(dir / "cameras.txt", "1 PINHOLE 640 480 500 500 320 240\n");
    write_file(dir / "images.txt", "1 1 0 0 0 0 0 0 9 a.png\n\n");
    CHECK_THROWS_AS(load_cameras(dir), DataError);

    write_file(dir / "cameras.txt", "1 OPENCV 640 480 500 500 320 240 0 0 0 0\n");
    write_file(dir / "images.txt", "1 1 0 0 0 0 0 0 1 a.png\n\n");
    CHECK_THROWS_AS(load_cameras(dir), FormatError);
}

TEST_CASE("cameras: synthetic ring survives save/load and looks at the target") {
    const fs::path dir = temp_dir();
    PlotParams p;
    p.n_stems = 0;
    p.camera_count = 8;
    const SyntheticScene scene = make_plot(p);
    save_cameras(scene.rig, dir);
    const CameraRig rig = load_cameras(dir);
    REQUIRE(rig.size() == 8);

    const Vec3 target(0, 0, scene.ground_at(0, 0) + 2.0);
    for (const auto& v : rig.views) {
        const Vec3 dir_to_target = (target - v.center_world()).normalized();
        const double cosang = std::clamp(dir_to_target.dot(v.forward_world()), -1.0, 1.0);
        CHECK(std::acos(cosang) < 1e-6);
    }
}

TEST_CASE("terrain: constant grid, orientation, ties and nodata") {
    const fs::path dir = temp_dir();
    write_file(dir / "flat.asc",
               "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n"
               "100 100\n100 100\n");
    const TerrainModel flat = load_terrain(dir / "flat.asc");
    for (double x : {0.1, 0.9, 1.5, 1.99})
        for (double y : {0.1, 1.2})
            CHECK(flat.nearest(x, y) == doctest::Approx(100.0));

    // first file row is the northern one
    write_file(dir / "rows.asc",
               "ncols 1\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n"
               "7\n3\n");
    const TerrainModel rows = load_terrain(dir / "rows.asc");
    CHECK(rows.nearest(0.5, 0.5) == doctest::Approx(3.0));  // south
    CHECK(rows.nearest(0.5, 1.5) == doctest::Approx(7.0));  // north

    // a query exactly on the cell boundary resolves to the lower-indexed cell
    write_file(dir / "tie.asc",
               "ncols 2\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\n"
               "5 9\n");
    const TerrainModel tie = load_terrain(dir / "tie.asc");
    CHECK(tie.nearest(1.0, 0.5) == doctest::Approx(5.0));
    CHECK(tie.nearest(1.0000001, 0.5) == doctest::Approx(9.0));

    write_file(dir / "nodata.asc",
               "ncols 1\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -1\n"
               "-1\n");
    const TerrainModel nodata = load_terrain(dir / "nodata.asc");
    CHECK(!nodata.nearest(0.5, 0.5).has_value());

    CHECK(flat.in_padded_bounds(-0.5, -0.5));
    CHECK(!flat.in_padded_bounds(-1.5, 0.0));
}

TEST_CASE("terrain: save/load round trip") {
    const fs::path dir = temp_dir();
    TerrainModel t;
    t.ncols = 3;
    t.nrows = 2;
    t.x0 = -1.5;
    t.y0 = 2.25;
    t.cell = 0.5;
    t.z = {1, 2, 3, 4, 5, 6};
    save_terrain(t, dir / "t.asc");
    const TerrainModel u = load_terrain(dir / "t.asc");
    CHECK(u.ncols == 3);
    CHECK(u.nrows == 2);
    CHECK(u.x0 == t.x0);
    CHECK(u.cell == t.cell);
    CHECK(u.z == t.z);
}

TEST_CASE("inventory: parsing, duplicates, validation") {
    const fs::path dir = temp_dir();
    write_file(dir / "inv.csv", "plot,tree,dbh_cm\n1,12,31.4\n");
    const FieldInventory inv = load_inventory(dir / "inv.csv");
    REQUIRE(inv.rows.size() == 1);
    CHECK(inv.rows[0].plot == 1);
    CHECK(inv.rows[0].tree == 12);
    CHECK(inv.rows[0].dbh_cm == doctest::Approx(31.4));

    write_file(dir / "dup.csv", "plot,tree,dbh_cm\n1,12,31.4\n1,12,29\n");
    CHECK_THROWS_AS(load_inventory(dir / "dup.csv"), DataError);

    write_file(dir / "neg.csv", "plot,tree,dbh_cm\n1,12,-3\n");
    CHECK_THROWS_AS(load_inventory(dir / "neg.csv"), DataError);

    FieldInventory with_xy;
    with_xy.rows.push_back({2, 5, 20.0, Vec2(1.5, -2.5)});
    save_inventory(with_xy, dir / "xy.csv");
    const FieldInventory back = load_inventory(dir / "xy.csv");
    REQUIRE(back.rows.size() == 1);
    REQUIRE(back.rows[0].position.has_value());
    CHECK((*back.rows[0].position - Vec2(1.5, -2.5)).norm() < 1e-9);
}

TEST_CASE("trunk labels: parsing and duplicates") {
    const fs::path dir = temp_dir();
    write_file(dir / "labels.csv", "point_index,tree_id\n0,3\n5,3\n9,3\n");
    const TrunkLabelSet set = load_trunk_labels(dir / "labels.csv");
    CHECK(set.size() == 3);
    CHECK(set.tree_of(5) == 3);
    CHECK(!set.tree_of(1).has_value());

    write_file(dir / "dup.csv", "point_index,tree_id\n0,3\n0,4\n");
    CHECK_THROWS_AS(load_trunk_labels(dir / "dup.csv"), DataError);

    save_trunk_labels(set, dir / "out.csv");
    CHECK(load_trunk_labels(dir / "out.csv").size() == 3);
}

TEST_CASE("world transform: projections survive a similarity change of frame") {
    PlotParams p;
    p.n_stems = 1;
    p.camera_count = 4;
    p.seed = 23;
    const SyntheticScene scene = make_plot(p);

    WorldTransform tf;
    tf.scale = 2.5;
    tf.rotation = Quat(Eigen::AngleAxisd(0.8, Vec3(0.2, -0.4, 0.9).normalized()));
    tf.translation = Vec3(10, -4, 7);

    GaussianField field = scene.field;
    CameraRig rig = scene.rig;
    apply_world_transform(field, tf);
    apply_world_transform(rig, tf);

    for (std::size_t v = 0; v < rig.size(); ++v) {
        for (std::size_t i = 0; i < field.size(); i += 97) {
            const Vec3 cam_old = scene.rig.views[v].to_camera(scene.field.means[i]);
            const Vec3 cam_new = rig.views[v].to_camera(field.means[i]);
            // camera-frame coordinates scale uniformly, so pixels are unchanged
            CHECK((cam_new - tf.scale * cam_old).norm() < 1e-9);
            if (cam_old.z() > 0.1) {
                const Vec2 u_old = scene.rig.views[v].pixel_of(cam_old);
                const Vec2 u_new = rig.views[v].pixel_of(cam_new);
                CHECK((u_old - u_new).norm() < 1e-8);
            }
        }
        CHECK((rig.views[v].R * rig.views[v].R.transpose() - Mat3::Identity())
                  .cwiseAbs()
                  .maxCoeff() < 1e-12);
    }
    // scales and alphas transform as expected
    CHECK(field.scales[0].x() == doctest::Approx(tf.scale * scene.field.scales[0].x()).epsilon(1e-12));
    CHECK(field.alphas[0] == scene.field.alphas[0]);

    CHECK_THROWS_AS(WorldTransform::parse("1,2,3"), ConfigError);
    CHECK_THROWS_AS(WorldTransform::parse("-1,1,0,0,0,0,0,0"), ConfigError);
    const WorldTransform parsed = WorldTransform::parse("2.5,1,0,0,0,1,2,3");
    CHECK(parsed.scale == 2.5);
    CHECK((parsed.translation - Vec3(1, 2, 3)).norm() == 0.0);
}
