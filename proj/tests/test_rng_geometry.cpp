// Copyright (c) 2026 stemsplat authors
// SPDX-License-Identifier: Apache-2.0

#include "stemsplat/geometry.hpp"
#include "stemsplat/rng.hpp"

#include <doctest.h>

#include <cmath>

using namespace stemsplat;

TEST_CASE("derived streams are reproducible and order-independent") {
    RngStream a = derive_stream(42, rng_tag::kSampler, 7);
    RngStream b = derive_stream(42, rng_tag::kSampler, 7);
    for (int i = 0; i < 16; ++i) CHECK(a.next_u64() == b.next_u64());

    // consuming a sibling stream must not affect this one
    RngStream sibling = derive_stream(42, rng_tag::kSampler, 8);
    for (int i = 0; i < 100; ++i) sibling.next_u64();
    RngStream c = derive_stream(42, rng_tag::kSampler, 7);
    RngStream d = derive_stream(42, rng_tag::kSampler, 7);
    for (int i = 0; i < 16; ++i) CHECK(c.next_u64() == d.next_u64());
}

TEST_CASE("uniform doubles stay in range") {
    RngStream rng(123);
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.next_double();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        const double v = rng.next_double_open();
        CHECK(v > 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("normal draws have roughly standard moments") {
    RngStream rng(99);
    const int n = 200000;
    double sum = 0, sum2 = 0;
    for (int i = 0; i < n; ++i) {
        const double x = rng.next_normal();
        sum += x;
        sum2 += x * x;
    }
    const double mean = sum / n;
    const double var = sum2 / n - mean * mean;
    CHECK(std::abs(mean) < 0.01);
    CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("sigmoid and logit are inverse") {
    for (double p : {0.01, 0.3, 0.5, 0.77, 0.99})
        CHECK(sigmoid(logit(p)) == doctest::Approx(p).epsilon(1e-12));
    CHECK(sigmoid(0.0) == 0.5);
}

TEST_CASE("eigenvalue floor clamps only below the floor") {
    Mat2 big;
    big << 100.0, 3.0, 3.0, 50.0;
    CHECK((floor_eigenvalues(big, 0.3) - big).cwiseAbs().maxCoeff() < 1e-9);

    Mat2 thin;
    thin << 1e-6, 0.0, 0.0, 2.0;
    const Mat2 floored = floor_eigenvalues(thin, 0.3);
    Eigen::SelfAdjointEigenSolver<Mat2> es(floored);
    CHECK(es.eigenvalues().minCoeff() >= 0.3 - 1e-12);
    CHECK(es.eigenvalues().maxCoeff() == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("quaternion conversions") {
    const Mat3 eye = rotation_from_wxyz(1, 0, 0, 0);
    CHECK((eye - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12);

    // half-turn about z
    const Mat3 r = rotation_from_wxyz(0, 0, 0, 1);
    Mat3 expect;
    expect << -1, 0, 0, 0, -1, 0, 0, 0, 1;
    CHECK((r - expect).cwiseAbs().maxCoeff() < 1e-12);

    // unnormalized input is normalized first
    const Mat3 r2 = rotation_from_wxyz(2, 0, 0, 0);
    CHECK((r2 - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("tilt and rotation-vector helpers") {
    CHECK(tilt_from_vertical(Vec3(0, 0, 1)) == doctest::Approx(0.0));
    CHECK(tilt_from_vertical(Vec3(0, 0, -2)) == doctest::Approx(0.0)); // axis, not direction
    CHECK(tilt_from_vertical(Vec3(1, 0, 1)) == doctest::Approx(M_PI / 4).epsilon(1e-12));

    const Vec3 v(1, 0, 0);
    const Vec3 rotated = rotate_by_rotvec(Vec3(0, 0, M_PI / 2), v);
    CHECK((rotated - Vec3(0, 1, 0)).norm() < 1e-12);
    CHECK((rotate_by_rotvec(Vec3::Zero(), v) - v).norm() == 0.0);
}
