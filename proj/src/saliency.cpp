#include "oadg/saliency.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>

#include "oadg/error.hpp"

namespace oadg {

namespace saliency_detail {

namespace {

int reflect101(int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
    }
    return i;
}

}  // namespace

GrayImage box_filter3(const GrayImage& src) {
    GrayImage dst(src.width, src.height);
    for (int y = 0; y < src.height; ++y) {
        for (int x = 0; x < src.width; ++x) {
            double sum = 0.0;
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    sum += src.at(reflect101(x + dx, src.width), reflect101(y + dy, src.height));
                }
            }
            dst.at(x, y) = sum / 9.0;
        }
    }
    return dst;
}

GrayImage gaussian_blur(const GrayImage& src, double sigma) {
    if (sigma <= 0.0) return src;
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(2 * radius + 1);
    double total = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
        total += kernel[i + radius];
    }
    for (double& k : kernel) k /= total;

    GrayImage tmp(src.width, src.height);
    for (int y = 0; y < src.height; ++y) {
        for (int x = 0; x < src.width; ++x) {
            double sum = 0.0;
            for (int i = -radius; i <= radius; ++i) sum += kernel[i + radius] * src.at(reflect101(x + i, src.width), y);
            tmp.at(x, y) = sum;
        }
    }
    GrayImage dst(src.width, src.height);
    for (int y = 0; y < src.height; ++y) {
        for (int x = 0; x < src.width; ++x) {
            double sum = 0.0;
            for (int i = -radius; i <= radius; ++i) sum += kernel[i + radius] * tmp.at(x, reflect101(y + i, src.height));
            dst.at(x, y) = sum;
        }
    }
    return dst;
}

void normalize_min_max(GrayImage& img) {
    if (img.values.empty()) return;
    const auto [lo_it, hi_it] = std::minmax_element(img.values.begin(), img.values.end());
    const double lo = *lo_it;
    const double range = *hi_it - lo;
    if (!(range > 1e-300) || range <= 1e-12 * std::max(std::abs(*hi_it), std::abs(lo))) {
        std::fill(img.values.begin(), img.values.end(), 0.0);
        return;
    }
    for (double& v : img.values) v = std::clamp((v - lo) / range, 0.0, 1.0);
}

int clamped_work_size(int requested, int width, int height) {
    return std::min(requested, 2 * std::min(width, height));
}

}  // namespace saliency_detail

namespace {

// The FFTW planner is not thread-safe; execution of a finished plan is.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

using Complex = std::complex<double>;

void dft2d(std::vector<Complex>& data, int n, int sign) {
    auto* buf = reinterpret_cast<fftw_complex*>(data.data());
    fftw_plan plan;
    {
        std::lock_guard lock(planner_mutex());
        plan = fftw_plan_dft_2d(n, n, buf, buf, sign, FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan);
}

bool is_constant(const GrayImage& img) {
    const auto [lo, hi] = std::minmax_element(img.values.begin(), img.values.end());
    return *hi - *lo <= 1e-12;
}

}  // namespace

SaliencyMap spectral_residual_map(const ImageBuffer& image, const SaliencyConfig& config) {
    using namespace saliency_detail;
    if (image.empty()) throw Error(ErrorCode::DegenerateImage, "zero-area image");
    if (config.work_size < 8) throw Error(ErrorCode::InvalidArgument, "work_size must be >= 8");

    const int n = clamped_work_size(config.work_size, image.width(), image.height());
    const GrayImage work = resize_bilinear(to_gray(image), n, n);
    if (is_constant(work)) return SaliencyMap(image.width(), image.height(), 0.0);

    const std::size_t count = static_cast<std::size_t>(n) * n;
    std::vector<Complex> spectrum(count);
    for (std::size_t i = 0; i < count; ++i) spectrum[i] = Complex(work.values[i], 0.0);
    dft2d(spectrum, n, FFTW_FORWARD);

    GrayImage log_amp(n, n);
    std::vector<double> phase(count);
    for (std::size_t i = 0; i < count; ++i) {
        log_amp.values[i] = std::log(std::abs(spectrum[i]) + config.log_epsilon);
        phase[i] = std::arg(spectrum[i]);
    }
    const GrayImage avg = box_filter3(log_amp);
    for (std::size_t i = 0; i < count; ++i) {
        spectrum[i] = std::polar(std::exp(log_amp.values[i] - avg.values[i]), phase[i]);
    }
    dft2d(spectrum, n, FFTW_BACKWARD);

    // FFTW's inverse is unnormalized; the 1/N^2 factor is irrelevant after
    // min-max normalization but kept so intermediate values match a textbook IDFT.
    const double scale = 1.0 / static_cast<double>(count);
    GrayImage energy(n, n);
    for (std::size_t i = 0; i < count; ++i) energy.values[i] = std::norm(spectrum[i] * scale);

    GrayImage smooth = gaussian_blur(energy, config.blur_sigma_ratio * n);
    normalize_min_max(smooth);
    SaliencyMap out = resize_bilinear(smooth, image.width(), image.height());
    for (double& v : out.values) v = std::clamp(v, 0.0, 1.0);
    return out;
}

double object_saliency_score(const SaliencyMap& map, const BBox& bbox) {
    if (!bbox.valid_within(map.width, map.height)) {
        throw Error(ErrorCode::BoxOutOfBounds, "box outside saliency map");
    }
    double sum = 0.0;
    for (int y = bbox.y; y < bbox.bottom(); ++y) {
        for (int x = bbox.x; x < bbox.right(); ++x) sum += map.at(x, y);
    }
    return sum / static_cast<double>(bbox.area());
}

}  // namespace oadg
