// Copyright (c) 2026 stemsplat authors
// SPDX-License-Identifier: Apache-2.0

#include "stemsplat/sampler.hpp"

#include "stemsplat/rng.hpp"

#include <doctest.h>

#include <cmath>

using namespace stemsplat;

namespace {

GaussianField field_of(const std::vector<Vec3>& means, const Vec3& scale, double alpha,
                       const Eigen::Vector4d& quat = Eigen::Vector4d(1, 0, 0, 0)) {
    GaussianField f;
    for (const auto& m : means) {
        f.means.push_back(m);
        f.log_scales.push_back(scale.array().log());
        f.rotations_raw.push_back(quat);
        f.logit_opacities.push_back(logit(alpha));
    }
    f.activate();
    return f;
}

} // namespace

TEST_CASE("thinning: zero opacity yields an empty cloud") {
    GaussianField f = field_of({Vec3(0, 0, 0), Vec3(1, 1, 1)}, Vec3(0.1, 0.1, 0.1), 0.5);
    // force alpha to exactly zero; the loader never produces it but the math must hold
    f.alphas[0] = f.alphas[1] = 0.0;
    const CandidateCloud cloud = sample_candidates(f, 100, 3);
    CHECK(cloud.size() == 0);
}

TEST_CASE("thinning: unit opacity with degenerate scale keeps every draw at the mean") {
    GaussianField f = field_of({Vec3(2, -1, 5)}, Vec3(1e-9, 1e-9, 1e-9), 0.5);
    f.alphas[0] = 1.0;
    const CandidateCloud cloud = sample_candidates(f, 50, 11);
    REQUIRE(cloud.size() == 50);
    for (const auto& p : cloud.points) CHECK((p - Vec3(2, -1, 5)).norm() < 1e-6);
    for (auto s : cloud.source) CHECK(s == 0);
}

TEST_CASE("thinning: kept fraction and kept covariance match the Gaussian") {
    // one anisotropic, rotated Gaussian; 1e4 draws at alpha 0.3
    const Eigen::Vector4d quat = Eigen::Vector4d(0.9, 0.1, -0.3, 0.2);
    const Vec3 scale(0.5, 0.2, 0.05);
    GaussianField f = field_of({Vec3(1, 2, 3)}, scale, 0.3, quat);
    const int draws = 10000;
    const CandidateCloud cloud = sample_candidates(f, draws, 17);

    const double frac = static_cast<double>(cloud.size()) / draws;
    const double sigma = std::sqrt(0.3 * 0.7 / draws);
    CHECK(std::abs(frac - 0.3) <= 3 * sigma);

    Vec3 mean = Vec3::Zero();
    for (const auto& p : cloud.points) mean += p;
    mean /= static_cast<double>(cloud.size());
    Mat3 cov = Mat3::Zero();
    for (const auto& p : cloud.points) cov += (p - mean) * (p - mean).transpose();
    cov /= static_cast<double>(cloud.size());

    const Mat3 expected = f.covariance(0);
    const double rel = (cov - expected).norm() / expected.norm();
    CHECK(rel < 0.05);
    // no positional selection bias: kept mean stays near mu
    CHECK((mean - Vec3(1, 2, 3)).norm() < 4 * scale.maxCoeff() / std::sqrt((double)cloud.size()) + 0.02);
}

TEST_CASE("determinism: same inputs, any thread count, same bytes") {
    RngStream rng(5);
    std::vector<Vec3> means;
    for (int i = 0; i < 32; ++i)
        means.push_back(Vec3(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)));
    const GaussianField f = field_of(means, Vec3(0.2, 0.3, 0.1), 0.6);

    const CandidateCloud a = sample_candidates(f, 40, 123, 1);
    const CandidateCloud b = sample_candidates(f, 40, 123, 4);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK((a.points[i] - b.points[i]).norm() == 0.0);
        CHECK(a.source[i] == b.source[i]);
    }

    const CandidateCloud c = sample_candidates(f, 40, 124);
    CHECK(a.size() != c.size()); // overwhelmingly likely under Bernoulli thinning

    // canonical ordering by Gaussian index
    for (std::size_t i = 1; i < a.size(); ++i) CHECK(a.source[i - 1] <= a.source[i]);
}

TEST_CASE("mean export: one point per Gaussian, exact and ordered") {
    RngStream rng(9);
    std::vector<Vec3> means;
    for (int i = 0; i < 10; ++i)
        means.push_back(Vec3(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)));
    const GaussianField f = field_of(means, Vec3(0.1, 0.1, 0.1), 0.5);
    const CandidateCloud cloud = export_means(f);
    REQUIRE(cloud.size() == f.size());
    Vec3 centroid_cloud = Vec3::Zero(), centroid_field = Vec3::Zero();
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        CHECK((cloud.points[i] - f.means[i]).norm() == 0.0);
        CHECK(cloud.source[i] == i);
        centroid_cloud += cloud.points[i];
        centroid_field += f.means[i];
    }
    CHECK((centroid_cloud - centroid_field).norm() == 0.0);
}
