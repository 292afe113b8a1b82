// Copyright 2026 The ChannelKit Authors
// SPDX-License-Identifier: Apache-2.0

/**
 * @file random.hpp
 * @brief Deterministic, platform-independent PRNG (SplitMix64).
 *
 * The generator is defined by the recurrence
 *
 *   state  <- state + 0x9E3779B97F4A7C15                 (mod 2^64)
 *   z      <- state
 *   z      <- (z xor (z >> 30)) * 0xBF58476D1CE4E5B9     (mod 2^64)
 *   z      <- (z xor (z >> 27)) * 0x94D049BB133111EB     (mod 2^64)
 *   output <- z xor (z >> 31)
 *
 * and uniform doubles take the top 53 bits: (output >> 11) * 2^-53,
 * giving values in [0, 1). Everything here is pure integer and IEEE-754
 * arithmetic, so identical seeds produce bit-identical streams on any
 * conforming platform.
 */

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include "channelkit/tensor.hpp"

namespace channelkit {

class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1).
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) {
        if (!(lo < hi))
            throw std::invalid_argument("Rng::uniform: lo (" + std::to_string(lo) +
                                        ") must be < hi (" + std::to_string(hi) + ")");
        return lo + (hi - lo) * next_unit();
    }

    /// Standard normal via Box-Muller; consumes two uniforms per pair.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = next_unit();
        double u2 = next_unit();
        if (u1 < 1e-300) u1 = 1e-300;
        double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(6.283185307179586476925286766559 * u2);
        have_spare_ = true;
        return r * std::cos(6.283185307179586476925286766559 * u2);
    }

    /// Integer in [0, n).
    int64_t below(int64_t n) {
        if (n <= 0) throw std::invalid_argument("Rng::below: n must be positive");
        return static_cast<int64_t>(next_u64() % static_cast<uint64_t>(n));
    }

private:
    uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

/// Deterministic tensor of uniforms in [lo, hi).
inline Tensor seeded_uniform(Shape shape, double lo, double hi, uint64_t seed) {
    if (!(lo < hi))
        throw std::invalid_argument("seeded_uniform: lo (" + std::to_string(lo) +
                                    ") must be < hi (" + std::to_string(hi) + ")");
    Tensor t = Tensor::zeros(std::move(shape));
    Rng rng(seed);
    for (double& v : t.data) v = lo + (hi - lo) * rng.next_unit();
    return t;
}

/// FNV-1a 64-bit hash; used to derive per-name sub-seeds from a master seed.
inline uint64_t fnv1a(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Stable sub-seed for a named stream (parameter init, dropout, shuffle, ...).
inline uint64_t derive_seed(uint64_t master, std::string_view tag) {
    Rng r(master ^ fnv1a(tag));
    return r.next_u64();
}

inline uint64_t derive_seed(uint64_t master, std::string_view tag, uint64_t index) {
    Rng r(master ^ fnv1a(tag) ^ (0x9E3779B97F4A7C15ULL * (index + 1)));
    return r.next_u64();
}

}  // namespace channelkit
