#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "genconvit/common.hpp"

namespace gcv {

// std::mt19937_64 output is fully specified by the standard; the distribution
// helpers below are hand-rolled because std:: distributions are not, and the
// pipeline promises bit-identical results for a fixed seed.
using Rng = std::mt19937_64;

inline Rng make_rng(u64 seed, u64 a = 0, u64 b = 0, u64 c = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(a),    static_cast<std::uint32_t>(a >> 32),
                      static_cast<std::uint32_t>(b),    static_cast<std::uint32_t>(b >> 32),
                      static_cast<std::uint32_t>(c),    static_cast<std::uint32_t>(c >> 32)};
    return Rng(seq);
}

// Uniform in [0, 1).
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(rng);
}

// Uniform integer in [lo, hi] via rejection-free modulo of a 64-bit draw;
// the bias is < 2^-40 for the ranges used here.
inline i64 uniform_int(Rng& rng, i64 lo, i64 hi) {
    u64 span = static_cast<u64>(hi - lo) + 1;
    return lo + static_cast<i64>(rng() % span);
}

inline bool bernoulli(Rng& rng, double p) { return uniform01(rng) < p; }

// Box-Muller without the cached spare, so draws are a pure function of the
// engine state.
inline double normal(Rng& rng, double mean = 0.0, double stddev = 1.0) {
    double u1 = 0.0;
    do {
        u1 = uniform01(rng);
    } while (u1 <= 0.0);
    double u2 = uniform01(rng);
    double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * 3.14159265358979323846 * u2);
}

}  // namespace gcv
