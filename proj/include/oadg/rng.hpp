#pragma once

#include <cstdint>
#include <random>

namespace oadg {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; good avalanche for deriving independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t stream_seed(std::uint64_t global_seed, std::uint64_t index) {
    return mix64(mix64(global_seed) ^ mix64(index + 0x632be59bd9b4e019ULL));
}

constexpr std::uint64_t stream_seed(std::uint64_t global_seed, std::uint64_t a, std::uint64_t b) {
    return stream_seed(stream_seed(global_seed, a), b);
}

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

/// Uniform double in [0, 1) from 53 random bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Uniform integer in [lo, hi] (inclusive), unbiased via rejection.
inline int uniform_int(Rng& rng, int lo, int hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    std::uint64_t r;
    do {
        r = rng();
    } while (r >= limit);
    return lo + static_cast<int>(r % span);
}

inline double uniform_real(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

/// Beta(a, b). The a = 1 case uses the closed-form inverse CDF.
double sample_beta(Rng& rng, double a, double b);

/// Standard normal via Box-Muller (no cached second value, so draws are stateless).
double sample_normal(Rng& rng);

/// Poisson via inversion for small means, normal approximation above 500.
int sample_poisson(Rng& rng, double mean);

}  // namespace oadg
