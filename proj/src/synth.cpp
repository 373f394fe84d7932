#include "oadg/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "oadg/error.hpp"
#include "oadg/parallel.hpp"

namespace oadg {

namespace {

constexpr int kSuperSample = 4;
constexpr std::array<double, 3> kClassHue{0.0, 120.0, 240.0};

std::array<double, 3> hsv(double h, double s, double v) {
    h = std::fmod(h + 360.0, 360.0);
    const double c = v * s;
    const double hp = h / 60.0;
    const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    std::array<double, 3> rgb{};
    if (hp < 1) rgb = {c, x, 0};
    else if (hp < 2) rgb = {x, c, 0};
    else if (hp < 3) rgb = {0, c, x};
    else if (hp < 4) rgb = {0, x, c};
    else if (hp < 5) rgb = {x, 0, c};
    else rgb = {c, 0, x};
    for (double& ch : rgb) ch += v - c;
    return rgb;
}

bool inside_shape(ShapeClass shape, double px, double py, double x0, double y0, double size) {
    switch (shape) {
        case ShapeClass::Circle: {
            const double r = size / 2.0;
            const double dx = px - (x0 + r), dy = py - (y0 + r);
            return dx * dx + dy * dy <= r * r;
        }
        case ShapeClass::Square: return px >= x0 && px <= x0 + size && py >= y0 && py <= y0 + size;
        case ShapeClass::Triangle: {
            // apex at top center, base along the bottom edge
            if (py < y0 || py > y0 + size) return false;
            const double half = 0.5 * size * (py - y0) / size;
            const double cx = x0 + size / 2.0;
            return px >= cx - half && px <= cx + half;
        }
    }
    return false;
}

void paint_background(ImageBuffer& img, Rng& rng) {
    constexpr int coarse = 5;
    const double base_hue = uniform_real(rng, 0.0, 360.0);
    std::array<std::array<std::array<double, 3>, coarse>, coarse> grid{};
    for (auto& row : grid) {
        for (auto& cell : row) {
            cell = hsv(base_hue + uniform_real(rng, -60.0, 60.0), uniform_real(rng, 0.0, 0.3), uniform_real(rng, 0.3, 0.7));
        }
    }
    const int n = img.width();
    for (int y = 0; y < img.height(); ++y) {
        const double fy = (y + 0.5) / img.height() * (coarse - 1);
        const int y0 = std::min(static_cast<int>(fy), coarse - 2);
        const double wy = fy - y0;
        for (int x = 0; x < n; ++x) {
            const double fx = (x + 0.5) / n * (coarse - 1);
            const int x0 = std::min(static_cast<int>(fx), coarse - 2);
            const double wx = fx - x0;
            for (int c = 0; c < 3; ++c) {
                const double top = grid[y0][x0][c] * (1 - wx) + grid[y0][x0 + 1][c] * wx;
                const double bot = grid[y0 + 1][x0][c] * (1 - wx) + grid[y0 + 1][x0 + 1][c] * wx;
                img.at(x, y, c) = top * (1 - wy) + bot * wy;
            }
        }
    }
}

}  // namespace

void validate(const SynthConfig& config) {
    if (config.grid <= 0 || config.image_size <= 0 || config.image_size % config.grid != 0) {
        throw Error(ErrorCode::ConfigError, "synth.image_size must be divisible by synth.grid");
    }
    if (config.min_objects < 1 || config.max_objects < config.min_objects) {
        throw Error(ErrorCode::ConfigError, "synth object count range invalid");
    }
    if (config.min_object_size < 2 || config.max_object_size < config.min_object_size ||
        config.max_object_size > config.image_size) {
        throw Error(ErrorCode::ConfigError, "synth object size range invalid");
    }
    if (config.num_classes() != 3) throw Error(ErrorCode::ConfigError, "synth renders exactly three shape classes");
}

SampleRecord generate_scene(Rng& rng, const SynthConfig& config, const std::string& id) {
    const int size = config.image_size;
    SampleRecord sample;
    sample.id = id;
    sample.image = ImageBuffer(size, size);
    paint_background(sample.image, rng);

    const int count = uniform_int(rng, config.min_objects, config.max_objects);
    std::vector<BBox> placed;
    for (int k = 0; k < count; ++k) {
        const auto shape = static_cast<ShapeClass>(uniform_int(rng, 0, 2));
        const int side = uniform_int(rng, config.min_object_size, config.max_object_size);
        const auto color = hsv(kClassHue[static_cast<std::size_t>(shape)] + uniform_real(rng, -20.0, 20.0),
                               uniform_real(rng, 0.55, 1.0), uniform_real(rng, 0.55, 1.0));
        // Rejection-sample a placement that keeps `object_gap` pixels to every placed box.
        for (int attempt = 0; attempt < 40; ++attempt) {
            const int x0 = uniform_int(rng, 0, size - side);
            const int y0 = uniform_int(rng, 0, size - side);
            const BBox candidate{x0, y0, side, side};
            const bool clear = std::none_of(placed.begin(), placed.end(), [&](const BBox& b) {
                return candidate.x < b.right() + config.object_gap && b.x < candidate.right() + config.object_gap &&
                       candidate.y < b.bottom() + config.object_gap && b.y < candidate.bottom() + config.object_gap;
            });
            if (!clear) continue;

            int min_x = size, min_y = size, max_x = -1, max_y = -1;
            for (int y = y0; y < y0 + side; ++y) {
                for (int x = x0; x < x0 + side; ++x) {
                    int inside = 0;
                    for (int sy = 0; sy < kSuperSample; ++sy) {
                        for (int sx = 0; sx < kSuperSample; ++sx) {
                            const double px = x + (sx + 0.5) / kSuperSample;
                            const double py = y + (sy + 0.5) / kSuperSample;
                            inside += inside_shape(shape, px, py, x0, y0, side) ? 1 : 0;
                        }
                    }
                    if (inside == 0) continue;
                    const double alpha = static_cast<double>(inside) / (kSuperSample * kSuperSample);
                    for (int c = 0; c < 3; ++c) {
                        double& v = sample.image.at(x, y, c);
                        v = v * (1.0 - alpha) + color[static_cast<std::size_t>(c)] * alpha;
                    }
                    min_x = std::min(min_x, x);
                    min_y = std::min(min_y, y);
                    max_x = std::max(max_x, x);
                    max_y = std::max(max_y, y);
                }
            }
            const BBox tight{min_x, min_y, max_x - min_x + 1, max_y - min_y + 1};
            placed.push_back(candidate);
            sample.annotations.push_back({tight, static_cast<int>(shape)});
            break;
        }
    }

    // Fine sensor grain over the whole frame.
    for (double& v : sample.image.data()) v += 0.015 * sample_normal(rng);
    sample.image.clamp();
    return sample;
}

Dataset generate_dataset(const SynthConfig& config, int count, std::uint64_t split_tag, const std::string& prefix,
                         int jobs) {
    validate(config);
    Dataset dataset;
    dataset.classes = config.classes;
    dataset.samples.resize(static_cast<std::size_t>(std::max(count, 0)));
    parallel_for(dataset.samples.size(), jobs, [&](std::size_t i) {
        Rng rng = make_rng(stream_seed(config.seed, split_tag, i));
        dataset.samples[i] = generate_scene(rng, config, prefix + std::to_string(i));
    });
    return dataset;
}

SynthSplits generate_splits(const SynthConfig& config, int jobs) {
    SynthSplits splits;
    splits.train = generate_dataset(config, config.train_count, 1, "train", jobs);
    splits.val = generate_dataset(config, config.val_count, 2, "val", jobs);
    splits.test = generate_dataset(config, config.test_count, 3, "test", jobs);
    return splits;
}

}  // namespace oadg
