#include "oadg/transforms.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "oadg/error.hpp"
#include "oadg/image_io.hpp"

namespace oadg {

namespace {

constexpr std::array<std::pair<TransformKind, std::string_view>, 10> kKindNames{{
    {TransformKind::Equalize, "equalize"},
    {TransformKind::Posterize, "posterize"},
    {TransformKind::Solarize, "solarize"},
    {TransformKind::Gamma, "gamma"},
    {TransformKind::HueRotate, "hue-rotate"},
    {TransformKind::Rotate, "rotate"},
    {TransformKind::ShearX, "shear-x"},
    {TransformKind::ShearY, "shear-y"},
    {TransformKind::TranslateX, "translate-x"},
    {TransformKind::TranslateY, "translate-y"},
}};

double level_fraction(int magnitude) {
    return (std::clamp(magnitude, 1, 10) - 1) / 9.0;
}

void check_rect(const ImageBuffer& image, const BBox& rect) {
    if (!rect.valid_within(image.width(), image.height())) {
        throw Error(ErrorCode::BoxOutOfBounds, "transform rect outside image");
    }
}

template <typename Fn>
void for_each_value(ImageBuffer& image, const BBox& rect, Fn&& fn) {
    for (int y = rect.y; y < rect.bottom(); ++y) {
        for (int x = rect.x; x < rect.right(); ++x) {
            for (int c = 0; c < ImageBuffer::kChannels; ++c) {
                double& v = image.at(x, y, c);
                v = std::clamp(fn(v), 0.0, 1.0);
            }
        }
    }
}

int reflect101(int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
    }
    return i;
}

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
    const double mx = std::max({r, g, b});
    const double mn = std::min({r, g, b});
    const double d = mx - mn;
    v = mx;
    s = mx > 0.0 ? d / mx : 0.0;
    if (d <= 0.0) {
        h = 0.0;
    } else if (mx == r) {
        h = std::fmod((g - b) / d, 6.0);
    } else if (mx == g) {
        h = (b - r) / d + 2.0;
    } else {
        h = (r - g) / d + 4.0;
    }
    h *= 60.0;
    if (h < 0.0) h += 360.0;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
    const double c = v * s;
    const double hp = h / 60.0;
    const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    double r1 = 0, g1 = 0, b1 = 0;
    if (hp < 1) { r1 = c; g1 = x; }
    else if (hp < 2) { r1 = x; g1 = c; }
    else if (hp < 3) { g1 = c; b1 = x; }
    else if (hp < 4) { g1 = x; b1 = c; }
    else if (hp < 5) { r1 = x; b1 = c; }
    else { r1 = c; b1 = x; }
    const double m = v - c;
    r = r1 + m;
    g = g1 + m;
    b = b1 + m;
}

}  // namespace

std::string_view to_string(TransformKind kind) {
    for (const auto& [k, name] : kKindNames) {
        if (k == kind) return name;
    }
    return "unknown";
}

std::string_view to_string(RegionLevel level) {
    switch (level) {
        case RegionLevel::Image: return "image";
        case RegionLevel::Foreground: return "foreground";
        case RegionLevel::RandomBox: return "random-box";
    }
    return "unknown";
}

std::optional<TransformKind> parse_transform_kind(std::string_view name) {
    for (const auto& [k, n] : kKindNames) {
        if (n == name) return k;
    }
    return std::nullopt;
}

bool is_spatial(TransformKind kind) {
    switch (kind) {
        case TransformKind::Rotate:
        case TransformKind::ShearX:
        case TransformKind::ShearY:
        case TransformKind::TranslateX:
        case TransformKind::TranslateY: return true;
        default: return false;
    }
}

const std::vector<TransformKind>& all_transform_kinds() {
    static const std::vector<TransformKind> kinds = [] {
        std::vector<TransformKind> v;
        for (const auto& [k, name] : kKindNames) v.push_back(k);
        return v;
    }();
    return kinds;
}

double gamma_for_level(int magnitude) { return 0.5 * std::pow(4.0, level_fraction(magnitude)); }

int posterize_levels_for_level(int magnitude) {
    return static_cast<int>(std::lround(256.0 + (4.0 - 256.0) * level_fraction(magnitude)));
}

double solarize_threshold_for_level(int magnitude) { return 1.0 - 0.6 * level_fraction(magnitude); }
double hue_degrees_for_level(int magnitude) { return 3.0 * std::clamp(magnitude, 1, 10); }
double rotate_degrees_for_level(int magnitude) { return 2.0 * std::clamp(magnitude, 1, 10); }
double shear_for_level(int magnitude) { return 0.02 * std::clamp(magnitude, 1, 10); }
double translate_fraction_for_level(int magnitude) { return 0.02 * std::clamp(magnitude, 1, 10); }

void gamma_correct(ImageBuffer& image, const BBox& rect, double gamma) {
    check_rect(image, rect);
    if (gamma == 1.0) return;
    for_each_value(image, rect, [gamma](double v) { return std::pow(v, gamma); });
}

void posterize(ImageBuffer& image, const BBox& rect, int levels) {
    check_rect(image, rect);
    if (levels < 2) throw Error(ErrorCode::InvalidArgument, "posterize needs at least 2 levels");
    const double steps = levels - 1;
    for_each_value(image, rect, [steps](double v) { return std::round(v * steps) / steps; });
}

void solarize(ImageBuffer& image, const BBox& rect, double threshold) {
    check_rect(image, rect);
    for_each_value(image, rect, [threshold](double v) { return v > threshold ? 1.0 - v : v; });
}

void hue_rotate(ImageBuffer& image, const BBox& rect, double degrees) {
    check_rect(image, rect);
    for (int y = rect.y; y < rect.bottom(); ++y) {
        for (int x = rect.x; x < rect.right(); ++x) {
            double h, s, v;
            rgb_to_hsv(image.at(x, y, 0), image.at(x, y, 1), image.at(x, y, 2), h, s, v);
            if (s <= 0.0) continue;
            h = std::fmod(h + degrees, 360.0);
            if (h < 0.0) h += 360.0;
            double r, g, b;
            hsv_to_rgb(h, s, v, r, g, b);
            image.at(x, y, 0) = std::clamp(r, 0.0, 1.0);
            image.at(x, y, 1) = std::clamp(g, 0.0, 1.0);
            image.at(x, y, 2) = std::clamp(b, 0.0, 1.0);
        }
    }
}

void equalize(ImageBuffer& image, const BBox& rect) {
    check_rect(image, rect);
    const long total = rect.area();
    for (int c = 0; c < ImageBuffer::kChannels; ++c) {
        std::array<long, 256> hist{};
        for (int y = rect.y; y < rect.bottom(); ++y) {
            for (int x = rect.x; x < rect.right(); ++x) ++hist[to_byte(image.at(x, y, c))];
        }
        long cdf_min = 0;
        for (long h : hist) {
            if (h > 0) {
                cdf_min = h;
                break;
            }
        }
        if (total == cdf_min) continue;  // single gray level: nothing to spread
        std::array<double, 256> lut{};
        long cdf = 0;
        for (int b = 0; b < 256; ++b) {
            cdf += hist[b];
            lut[b] = std::clamp(static_cast<double>(cdf - cdf_min) / static_cast<double>(total - cdf_min), 0.0, 1.0);
        }
        for (int y = rect.y; y < rect.bottom(); ++y) {
            for (int x = rect.x; x < rect.right(); ++x) {
                double& v = image.at(x, y, c);
                v = lut[to_byte(v)];
            }
        }
    }
}

void warp_in_box(ImageBuffer& image, const BBox& bbox, const WarpParams& p) {
    check_rect(image, bbox);
    const double theta = p.angle_degrees * std::numbers::pi / 180.0;
    const double ct = std::cos(theta), st = std::sin(theta);
    // A = R(theta) * [[1, shear_x], [shear_y, 1]]
    const double a00 = ct - st * p.shear_y, a01 = ct * p.shear_x - st;
    const double a10 = st + ct * p.shear_y, a11 = st * p.shear_x + ct;
    const double det = a00 * a11 - a01 * a10;
    if (std::abs(det) < 1e-12) throw Error(ErrorCode::InvalidArgument, "singular warp");
    const double i00 = a11 / det, i01 = -a01 / det, i10 = -a10 / det, i11 = a00 / det;

    const int w = bbox.w, h = bbox.h;
    const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
    std::vector<double> crop(static_cast<std::size_t>(w) * h * 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) crop[(static_cast<std::size_t>(y) * w + x) * 3 + c] = image.at(bbox.x + x, bbox.y + y, c);
        }
    }
    auto sample = [&](int x, int y, int c) {
        return crop[(static_cast<std::size_t>(reflect101(y, h)) * w + reflect101(x, w)) * 3 + c];
    };
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double dx = x - cx - p.translate_x;
            const double dy = y - cy - p.translate_y;
            const double sx = i00 * dx + i01 * dy + cx;
            const double sy = i10 * dx + i11 * dy + cy;
            const double fx = std::floor(sx), fy = std::floor(sy);
            const double wx = sx - fx, wy = sy - fy;
            const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
            for (int c = 0; c < 3; ++c) {
                // Lerp form keeps constant fields exactly constant.
                const double s00 = sample(x0, y0, c), s10 = sample(x0 + 1, y0, c);
                const double s01 = sample(x0, y0 + 1, c), s11 = sample(x0 + 1, y0 + 1, c);
                const double top = s00 + (s10 - s00) * wx;
                const double bot = s01 + (s11 - s01) * wx;
                image.at(bbox.x + x, bbox.y + y, c) = std::clamp(top + (bot - top) * wy, 0.0, 1.0);
            }
        }
    }
}

WarpParams warp_params_for(const TransformOp& op, const BBox& bbox) {
    const double sign = op.negate ? -1.0 : 1.0;
    WarpParams p;
    switch (op.kind) {
        case TransformKind::Rotate: p.angle_degrees = sign * rotate_degrees_for_level(op.magnitude); break;
        case TransformKind::ShearX: p.shear_x = sign * shear_for_level(op.magnitude); break;
        case TransformKind::ShearY: p.shear_y = sign * shear_for_level(op.magnitude); break;
        case TransformKind::TranslateX: p.translate_x = sign * translate_fraction_for_level(op.magnitude) * bbox.w; break;
        case TransformKind::TranslateY: p.translate_y = sign * translate_fraction_for_level(op.magnitude) * bbox.h; break;
        default: throw Error(ErrorCode::WrongOpCategory, std::string(to_string(op.kind)) + " is not spatial");
    }
    return p;
}

namespace {

void apply_op_in_place(ImageBuffer& image, const BBox& rect, const TransformOp& op) {
    const double sign = op.negate ? -1.0 : 1.0;
    switch (op.kind) {
        case TransformKind::Equalize: equalize(image, rect); break;
        case TransformKind::Posterize: posterize(image, rect, posterize_levels_for_level(op.magnitude)); break;
        case TransformKind::Solarize: solarize(image, rect, solarize_threshold_for_level(op.magnitude)); break;
        case TransformKind::Gamma: gamma_correct(image, rect, gamma_for_level(op.magnitude)); break;
        case TransformKind::HueRotate: hue_rotate(image, rect, sign * hue_degrees_for_level(op.magnitude)); break;
        default: warp_in_box(image, rect, warp_params_for(op, rect)); break;
    }
}

}  // namespace

ImageBuffer apply_color_op(const ImageBuffer& image, const BBox& rect, const TransformOp& op) {
    if (is_spatial(op.kind)) throw Error(ErrorCode::WrongOpCategory, std::string(to_string(op.kind)) + " is not a color op");
    check_rect(image, rect);
    ImageBuffer out = image;
    apply_op_in_place(out, rect, op);
    return out;
}

ImageBuffer apply_spatial_op_in_box(const ImageBuffer& image, const BBox& bbox, const TransformOp& op) {
    if (!is_spatial(op.kind)) throw Error(ErrorCode::WrongOpCategory, std::string(to_string(op.kind)) + " is not spatial");
    check_rect(image, bbox);
    ImageBuffer out = image;
    apply_op_in_place(out, bbox, op);
    return out;
}

ImageBuffer apply_chain(const ImageBuffer& image, const BBox& rect, const TransformChain& chain) {
    check_rect(image, rect);
    ImageBuffer out = image;
    for (const auto& op : chain) apply_op_in_place(out, rect, op);
    return out;
}

TransformChain sample_chain(Rng& rng, RegionLevel level, const TransformConfig& config) {
    std::vector<TransformKind> legal;
    for (auto k : config.pool) {
        if (level == RegionLevel::Foreground || !is_spatial(k)) legal.push_back(k);
    }
    if (legal.empty() || config.max_chain < 1) return {};
    const int length = uniform_int(rng, 1, config.max_chain);
    TransformChain chain;
    chain.reserve(length);
    for (int i = 0; i < length; ++i) {
        TransformOp op;
        op.kind = legal[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(legal.size()) - 1))];
        op.magnitude = uniform_int(rng, config.magnitude_min, config.magnitude_max);
        op.negate = uniform_int(rng, 0, 1) == 1;
        chain.push_back(op);
    }
    return chain;
}

}  // namespace oadg
