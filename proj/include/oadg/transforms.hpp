#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "oadg/image.hpp"
#include "oadg/rng.hpp"

namespace oadg {

enum class TransformKind {
    // color
    Equalize,
    Posterize,
    Solarize,
    Gamma,
    HueRotate,
    // spatial
    Rotate,
    ShearX,
    ShearY,
    TranslateX,
    TranslateY,
};

enum class RegionLevel { Image, Foreground, RandomBox };

std::string_view to_string(TransformKind kind);
std::string_view to_string(RegionLevel level);
std::optional<TransformKind> parse_transform_kind(std::string_view name);
bool is_spatial(TransformKind kind);

/// All transform kinds, in declaration order.
const std::vector<TransformKind>& all_transform_kinds();

struct TransformOp {
    TransformKind kind = TransformKind::Equalize;
    int magnitude = 1;  // 1..10
    /// Direction for signed ops (rotate, shear, translate, hue); ignored otherwise.
    bool negate = false;

    friend bool operator==(const TransformOp&, const TransformOp&) = default;
};

using TransformChain = std::vector<TransformOp>;

struct TransformConfig {
    /// Kinds eligible for sampling. Spatial kinds are only drawn at the
    /// Foreground level.
    std::vector<TransformKind> pool = all_transform_kinds();
    int max_chain = 3;
    int magnitude_min = 1;
    int magnitude_max = 10;
};

// Magnitude tables (level 1..10).
double gamma_for_level(int magnitude);
int posterize_levels_for_level(int magnitude);
double solarize_threshold_for_level(int magnitude);
double hue_degrees_for_level(int magnitude);
double rotate_degrees_for_level(int magnitude);
double shear_for_level(int magnitude);
double translate_fraction_for_level(int magnitude);

/// Geometric warp of a box crop about its center. Output pixel p samples the
/// crop at A^-1 (p - c - t) + c, where A = rotate(angle) * shear.
struct WarpParams {
    double angle_degrees = 0.0;
    double shear_x = 0.0;
    double shear_y = 0.0;
    double translate_x = 0.0;  // pixels
    double translate_y = 0.0;  // pixels
};

/// Color ops touch only pixels inside `rect`; the result is clamped to [0, 1].
/// Throws WrongOpCategory for spatial kinds and BoxOutOfBounds.
ImageBuffer apply_color_op(const ImageBuffer& image, const BBox& rect, const TransformOp& op);

/// Warps the crop under `bbox` about its own center using bilinear sampling
/// with reflect-101 padding of the crop, then pastes it back. Throws
/// WrongOpCategory for color kinds and BoxOutOfBounds.
ImageBuffer apply_spatial_op_in_box(const ImageBuffer& image, const BBox& bbox, const TransformOp& op);

/// Applies each op of the chain in order; spatial ops use `rect` as their box.
ImageBuffer apply_chain(const ImageBuffer& image, const BBox& rect, const TransformChain& chain);

/// 1..max_chain ops drawn uniformly from the pool legal at `level`.
TransformChain sample_chain(Rng& rng, RegionLevel level, const TransformConfig& config = {});

// Parameterized primitives, in place on `rect`.
void gamma_correct(ImageBuffer& image, const BBox& rect, double gamma);
void posterize(ImageBuffer& image, const BBox& rect, int levels);
void solarize(ImageBuffer& image, const BBox& rect, double threshold);
void hue_rotate(ImageBuffer& image, const BBox& rect, double degrees);
void equalize(ImageBuffer& image, const BBox& rect);
void warp_in_box(ImageBuffer& image, const BBox& bbox, const WarpParams& params);

WarpParams warp_params_for(const TransformOp& op, const BBox& bbox);

}  // namespace oadg
