#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "oadg/image.hpp"
#include "oadg/rng.hpp"

namespace oadg {

enum class CorruptionKind {
    GaussianNoise,
    ShotNoise,
    ImpulseNoise,
    DefocusBlur,
    MotionBlur,
    FogHaze,
    Brightness,
    Contrast,
    Pixelate,
    Jpeg,
};

std::string_view to_string(CorruptionKind kind);
/// Throws UnknownKind.
CorruptionKind parse_corruption_kind(std::string_view name);
const std::vector<CorruptionKind>& all_corruption_kinds();
bool is_stochastic(CorruptionKind kind);

struct CorruptionSpec {
    CorruptionKind kind = CorruptionKind::GaussianNoise;
    int severity = 1;  // 1..5
};

/// Severity tables, index 0 is severity 1.
struct CorruptionTables {
    std::array<double, 5> gaussian_sigma{0.04, 0.06, 0.08, 0.09, 0.10};
    std::array<double, 5> shot_photons{60, 25, 12, 5, 3};
    std::array<double, 5> impulse_amount{0.03, 0.06, 0.09, 0.17, 0.27};
    std::array<double, 5> defocus_radius{1.0, 1.5, 2.0, 2.5, 3.0};
    std::array<int, 5> motion_length{3, 5, 7, 9, 11};
    double motion_angle_degrees = 30.0;
    std::array<double, 5> fog_alpha{0.2, 0.35, 0.5, 0.6, 0.7};
    double fog_level = 0.9;
    std::array<double, 5> brightness_delta{0.1, 0.2, 0.3, 0.4, 0.5};
    std::array<double, 5> contrast_factor{0.4, 0.3, 0.2, 0.1, 0.05};
    std::array<int, 5> pixelate_block{2, 3, 4, 6, 8};
    std::array<int, 5> jpeg_quality{25, 18, 15, 10, 7};
};

/// Corrupted copy of `image`, same dims, clamped to [0, 1]. Only the noise
/// kinds draw from `rng`.
ImageBuffer corrupt(const ImageBuffer& image, const CorruptionSpec& spec, Rng& rng,
                    const CorruptionTables& tables = {});

}  // namespace oadg
