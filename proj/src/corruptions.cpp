#include "oadg/corruptions.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "oadg/error.hpp"
#include "oadg/image_io.hpp"

namespace oadg {

namespace {

constexpr std::array<std::pair<CorruptionKind, std::string_view>, 10> kNames{{
    {CorruptionKind::GaussianNoise, "gaussian-noise"},
    {CorruptionKind::ShotNoise, "shot-noise"},
    {CorruptionKind::ImpulseNoise, "impulse-noise"},
    {CorruptionKind::DefocusBlur, "defocus-blur"},
    {CorruptionKind::MotionBlur, "motion-blur"},
    {CorruptionKind::FogHaze, "fog-haze"},
    {CorruptionKind::Brightness, "brightness"},
    {CorruptionKind::Contrast, "contrast"},
    {CorruptionKind::Pixelate, "pixelate"},
    {CorruptionKind::Jpeg, "jpeg"},
}};

struct Kernel {
    int radius = 0;
    std::vector<double> weights;  // (2r+1)^2, sums to 1

    double at(int dx, int dy) const {
        const int n = 2 * radius + 1;
        return weights[static_cast<std::size_t>(dy + radius) * n + (dx + radius)];
    }
};

Kernel normalized(Kernel k) {
    double total = 0.0;
    for (double w : k.weights) total += w;
    for (double& w : k.weights) w /= total;
    return k;
}

// Disk of the given radius, antialiased by 8x8 supersampling of each tap.
Kernel disk_kernel(double radius) {
    Kernel k;
    k.radius = static_cast<int>(std::ceil(radius));
    const int n = 2 * k.radius + 1;
    k.weights.assign(static_cast<std::size_t>(n) * n, 0.0);
    constexpr int ss = 8;
    for (int dy = -k.radius; dy <= k.radius; ++dy) {
        for (int dx = -k.radius; dx <= k.radius; ++dx) {
            int inside = 0;
            for (int sy = 0; sy < ss; ++sy) {
                for (int sx = 0; sx < ss; ++sx) {
                    const double px = dx - 0.5 + (sx + 0.5) / ss;
                    const double py = dy - 0.5 + (sy + 0.5) / ss;
                    if (px * px + py * py <= radius * radius) ++inside;
                }
            }
            k.weights[static_cast<std::size_t>(dy + k.radius) * n + (dx + k.radius)] = inside;
        }
    }
    return normalized(std::move(k));
}

// Line segment of `length` taps centered on the origin, rasterized with
// bilinear splatting so non-axis angles stay smooth.
Kernel line_kernel(int length, double angle_degrees) {
    Kernel k;
    const double half = (length - 1) / 2.0;
    k.radius = static_cast<int>(std::ceil(half)) + 1;
    const int n = 2 * k.radius + 1;
    k.weights.assign(static_cast<std::size_t>(n) * n, 0.0);
    const double theta = angle_degrees * std::numbers::pi / 180.0;
    const double ux = std::cos(theta), uy = std::sin(theta);
    for (int i = 0; i < length; ++i) {
        const double t = i - half;
        const double px = t * ux, py = t * uy;
        const double fx = std::floor(px), fy = std::floor(py);
        const double wx = px - fx, wy = py - fy;
        const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
        auto add = [&](int x, int y, double w) {
            k.weights[static_cast<std::size_t>(y + k.radius) * n + (x + k.radius)] += w;
        };
        add(x0, y0, (1 - wx) * (1 - wy));
        add(x0 + 1, y0, wx * (1 - wy));
        add(x0, y0 + 1, (1 - wx) * wy);
        add(x0 + 1, y0 + 1, wx * wy);
    }
    return normalized(std::move(k));
}

ImageBuffer convolve(const ImageBuffer& src, const Kernel& k) {
    const int w = src.width(), h = src.height();
    ImageBuffer dst(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc[3] = {0, 0, 0};
            for (int dy = -k.radius; dy <= k.radius; ++dy) {
                const int sy = std::clamp(y + dy, 0, h - 1);
                for (int dx = -k.radius; dx <= k.radius; ++dx) {
                    const double wt = k.at(dx, dy);
                    if (wt == 0.0) continue;
                    const int sx = std::clamp(x + dx, 0, w - 1);
                    for (int c = 0; c < 3; ++c) acc[c] += wt * src.at(sx, sy, c);
                }
            }
            for (int c = 0; c < 3; ++c) dst.at(x, y, c) = acc[c];
        }
    }
    return dst;
}

ImageBuffer pixelate(const ImageBuffer& src, int block) {
    const int w = src.width(), h = src.height();
    ImageBuffer dst(w, h);
    for (int by = 0; by < h; by += block) {
        for (int bx = 0; bx < w; bx += block) {
            const int ey = std::min(by + block, h), ex = std::min(bx + block, w);
            const double count = static_cast<double>((ey - by) * (ex - bx));
            for (int c = 0; c < 3; ++c) {
                double sum = 0.0;
                for (int y = by; y < ey; ++y)
                    for (int x = bx; x < ex; ++x) sum += src.at(x, y, c);
                const double mean = sum / count;
                for (int y = by; y < ey; ++y)
                    for (int x = bx; x < ex; ++x) dst.at(x, y, c) = mean;
            }
        }
    }
    return dst;
}

}  // namespace

std::string_view to_string(CorruptionKind kind) {
    for (const auto& [k, name] : kNames) {
        if (k == kind) return name;
    }
    return "unknown";
}

CorruptionKind parse_corruption_kind(std::string_view name) {
    for (const auto& [k, n] : kNames) {
        if (n == name) return k;
    }
    throw Error(ErrorCode::UnknownKind, std::string(name));
}

const std::vector<CorruptionKind>& all_corruption_kinds() {
    static const std::vector<CorruptionKind> kinds = [] {
        std::vector<CorruptionKind> v;
        for (const auto& [k, name] : kNames) v.push_back(k);
        return v;
    }();
    return kinds;
}

bool is_stochastic(CorruptionKind kind) {
    return kind == CorruptionKind::GaussianNoise || kind == CorruptionKind::ShotNoise ||
           kind == CorruptionKind::ImpulseNoise;
}

ImageBuffer corrupt(const ImageBuffer& image, const CorruptionSpec& spec, Rng& rng, const CorruptionTables& t) {
    if (spec.severity < 1 || spec.severity > 5) throw Error(ErrorCode::InvalidArgument, "severity must be in 1..5");
    const std::size_t s = static_cast<std::size_t>(spec.severity - 1);
    ImageBuffer out = image;
    auto values = out.data();
    switch (spec.kind) {
        case CorruptionKind::GaussianNoise: {
            const double sigma = t.gaussian_sigma[s];
            for (double& v : values) v += sigma * sample_normal(rng);
            break;
        }
        case CorruptionKind::ShotNoise: {
            const double photons = t.shot_photons[s];
            for (double& v : values) v = sample_poisson(rng, std::max(v, 0.0) * photons) / photons;
            break;
        }
        case CorruptionKind::ImpulseNoise: {
            const double amount = t.impulse_amount[s];
            for (double& v : values) {
                const double u = uniform01(rng);
                if (u < amount / 2) v = 0.0;
                else if (u < amount) v = 1.0;
            }
            break;
        }
        case CorruptionKind::DefocusBlur: out = convolve(image, disk_kernel(t.defocus_radius[s])); break;
        case CorruptionKind::MotionBlur:
            out = convolve(image, line_kernel(t.motion_length[s], t.motion_angle_degrees));
            break;
        case CorruptionKind::FogHaze: {
            const double alpha = t.fog_alpha[s];
            for (double& v : values) v = v * (1.0 - alpha) + alpha * t.fog_level;
            break;
        }
        case CorruptionKind::Brightness: {
            const double delta = t.brightness_delta[s];
            for (double& v : values) v += delta;
            break;
        }
        case CorruptionKind::Contrast: {
            double mean = 0.0;
            for (double v : image.data()) mean += v;
            mean /= static_cast<double>(image.size());
            const double factor = t.contrast_factor[s];
            for (double& v : values) v = (v - mean) * factor + mean;
            break;
        }
        case CorruptionKind::Pixelate: out = pixelate(image, t.pixelate_block[s]); break;
        case CorruptionKind::Jpeg: out = jpeg_round_trip(image, t.jpeg_quality[s]); break;
    }
    out.clamp();
    return out;
}

}  // namespace oadg
