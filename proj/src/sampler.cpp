// Copyright (c) 2026 stemsplat authors
// SPDX-License-Identifier: Apache-2.0

#include "stemsplat/sampler.hpp"

#include "stemsplat/errors.hpp"
#include "stemsplat/parallel.hpp"
#include "stemsplat/rng.hpp"

#include <numeric>

namespace stemsplat {

CandidateCloud sample_candidates(const GaussianField& field, int draws_per_gaussian,
                                 std::uint64_t seed, int threads) {
    if (draws_per_gaussian < 1) throw ConfigError("draws_per_gaussian must be >= 1");

    const std::size_t n = field.size();
    struct Local {
        std::vector<Vec3> points;
        std::vector<std::uint32_t> source;
    };
    std::vector<Local> per_gaussian(n);

    parallel_for(n, threads, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            RngStream rng = derive_stream(seed, rng_tag::kSampler, i);
            const Mat3 rot = field.rotations[i].toRotationMatrix();
            const Vec3& s = field.scales[i];
            const double alpha = field.alphas[i];
            auto& local = per_gaussian[i];
            for (int j = 0; j < draws_per_gaussian; ++j) {
                const Vec3 xi(rng.next_normal(), rng.next_normal(), rng.next_normal());
                const bool keep = rng.bernoulli(alpha);
                if (!keep) continue;
                local.points.push_back(field.means[i] + rot * s.cwiseProduct(xi));
                local.source.push_back(static_cast<std::uint32_t>(i));
            }
        }
    });

    CandidateCloud cloud;
    cloud.seed = seed;
    std::size_t total = 0;
    for (const auto& l : per_gaussian) total += l.points.size();
    cloud.points.reserve(total);
    cloud.source.reserve(total);
    for (auto& l : per_gaussian) {
        cloud.points.insert(cloud.points.end(), l.points.begin(), l.points.end());
        cloud.source.insert(cloud.source.end(), l.source.begin(), l.source.end());
    }
    return cloud;
}

CandidateCloud export_means(const GaussianField& field) {
    CandidateCloud cloud;
    cloud.points = field.means;
    cloud.source.resize(field.size());
    std::iota(cloud.source.begin(), cloud.source.end(), 0u);
    return cloud;
}

} // namespace stemsplat
