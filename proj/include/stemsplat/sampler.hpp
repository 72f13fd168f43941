// Copyright (c) 2026 stemsplat authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "stemsplat/geometry.hpp"
#include "stemsplat/scene_io.hpp"

#include <cstdint>
#include <vector>

namespace stemsplat {

/// Candidate surface samples drawn from Gaussian volumes, before any
/// multi-view scoring. Canonically ordered by (Gaussian index, draw index).
struct CandidateCloud {
    std::vector<Vec3> points;
    std::vector<std::uint32_t> source; // Gaussian index each point was drawn from
    std::uint64_t seed = 0;

    std::size_t size() const { return points.size(); }
};

/// Draw `draws_per_gaussian` offsets xi ~ N(0, I3) per Gaussian, map them
/// through p = mu + R (s ⊙ xi), and keep each independently with
/// probability alpha_i. Each Gaussian consumes its own counter-derived RNG
/// stream, so the result is identical for any iteration order or thread
/// count.
CandidateCloud sample_candidates(const GaussianField& field, int draws_per_gaussian,
                                 std::uint64_t seed, int threads = 0);

/// Ablation baseline: one point per Gaussian, at its mean.
CandidateCloud export_means(const GaussianField& field);

} // namespace stemsplat
