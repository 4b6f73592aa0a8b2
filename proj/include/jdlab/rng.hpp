#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace jdlab {

using Engine = std::mt19937_64;

/// One step of the splitmix64 sequence; advances `state`.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Seed for substream `index` of `stream` under `master`. Depends only on its arguments,
/// never on scheduling.
inline std::uint64_t substream_seed(std::uint64_t master, std::uint64_t index, std::uint64_t stream = 0) {
    std::uint64_t s = master;
    std::uint64_t a = splitmix64(s);
    s = a ^ (stream * 0xD1B54A32D192ED03ULL);
    std::uint64_t b = splitmix64(s);
    s = b ^ index;
    splitmix64(s);
    return splitmix64(s);
}

inline Engine substream(std::uint64_t master, std::uint64_t index, std::uint64_t stream = 0) {
    return Engine(substream_seed(master, index, stream));
}

/// Uniform on (0, 1): never returns 0, so logs are safe.
inline double uniform_open(Engine& rng) {
    return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

/// Standard normal by the polar method (no cached state, so draws depend only on the engine).
inline double standard_normal(Engine& rng) {
    for (;;) {
        const double u = 2.0 * uniform_open(rng) - 1.0;
        const double v = 2.0 * uniform_open(rng) - 1.0;
        const double s = u * u + v * v;
        if (s > 0.0 && s < 1.0) return u * std::sqrt(-2.0 * std::log(s) / s);
    }
}

/// Poisson draw by sequential inversion; intended for small means (per-step counts).
inline int poisson_small(Engine& rng, double mean) {
    const double u = uniform_open(rng);
    double p = std::exp(-mean);
    double cdf = p;
    int k = 0;
    while (u > cdf && k < 1000) {
        ++k;
        p *= mean / k;
        cdf += p;
    }
    return k;
}

}  // namespace jdlab
