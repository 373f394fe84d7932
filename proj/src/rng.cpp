#include "oadg/rng.hpp"

#include <cmath>
#include <numbers>

namespace oadg {

namespace {

// Marsaglia-Tsang; shape < 1 handled by the usual boost U^(1/shape).
double sample_gamma(Rng& rng, double shape) {
    if (shape < 1.0) {
        const double u = uniform01(rng);
        return sample_gamma(rng, shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x, v;
        do {
            x = sample_normal(rng);
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = uniform01(rng);
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
        if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
}

}  // namespace

double sample_normal(Rng& rng) {
    double u1 = uniform01(rng);
    while (u1 <= 0.0) u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double sample_beta(Rng& rng, double a, double b) {
    if (a == 1.0 && b == 1.0) return uniform01(rng);
    if (a == 1.0) {
        // F(x) = 1 - (1 - x)^b
        const double u = uniform01(rng);
        return 1.0 - std::pow(1.0 - u, 1.0 / b);
    }
    const double x = sample_gamma(rng, a);
    const double y = sample_gamma(rng, b);
    return x / (x + y);
}

int sample_poisson(Rng& rng, double mean) {
    if (mean <= 0.0) return 0;
    if (mean > 500.0) {
        const double v = mean + std::sqrt(mean) * sample_normal(rng);
        return v < 0.0 ? 0 : static_cast<int>(std::lround(v));
    }
    // Inversion by sequential search.
    const double u = uniform01(rng);
    double p = std::exp(-mean);
    double cdf = p;
    int k = 0;
    while (u > cdf && k < 10000) {
        ++k;
        p *= mean / k;
        cdf += p;
    }
    return k;
}

}  // namespace oadg
