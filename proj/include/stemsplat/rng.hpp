// Copyright (c) 2026 stemsplat authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>

namespace stemsplat {

// Counter-based splittable RNG. Every consumer derives its own stream from
// (seed, tag, indices), so draws never depend on thread scheduling or on
// how many draws a sibling stream consumed.

inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline uint64_t mix64(uint64_t a, uint64_t b) {
    uint64_t s = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
    return splitmix64(s);
}

class RngStream {
public:
    explicit RngStream(uint64_t seed) : state_(seed) {
        // burn-in so nearby seeds decorrelate
        splitmix64(state_);
    }

    uint64_t next_u64() { return splitmix64(state_); }

    /// Uniform in [0, 1), 53-bit resolution.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform in (0, 1]; safe as a log() argument.
    double next_double_open() {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    /// Standard normal via Box-Muller; the spare of each pair is cached.
    double next_normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = next_double_open();
        const double u2 = next_double();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    bool bernoulli(double p) { return next_double() < p; }

    /// Uniform integer in [0, n).
    uint64_t next_below(uint64_t n) {
        // modulo bias is < 2^-53 for any realistic n here
        return static_cast<uint64_t>(next_double() * static_cast<double>(n));
    }

private:
    uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Derive a child stream from a root seed, a tag and up to two indices.
inline RngStream derive_stream(uint64_t seed, uint64_t tag, uint64_t i = 0, uint64_t j = 0) {
    return RngStream(mix64(mix64(mix64(seed, tag), i), j));
}

// Stream tags; any distinct constants work.
namespace rng_tag {
constexpr uint64_t kSampler = 0x5a4d504cULL;
constexpr uint64_t kCircle = 0xc149c4eULL;
constexpr uint64_t kTaper = 0x7a9e12ULL;
constexpr uint64_t kCylinder = 0xc7119d3ULL;
constexpr uint64_t kSynth = 0x575717ULL;
} // namespace rng_tag

} // namespace stemsplat
