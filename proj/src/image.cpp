#include "oadg/image.hpp"

#include <algorithm>
#include <cmath>

#include "oadg/error.hpp"

namespace oadg {

ImageBuffer::ImageBuffer(int width, int height, double fill)
    : width_(width), height_(height),
      data_(static_cast<std::size_t>(std::max(width, 0)) * std::max(height, 0) * kChannels, fill) {}

ImageBuffer::ImageBuffer(int width, int height, std::vector<double> data)
    : width_(width), height_(height), data_(std::move(data)) {
    if (data_.size() != static_cast<std::size_t>(width) * height * kChannels) {
        throw Error(ErrorCode::DimMismatch, "image data length does not match width*height*3");
    }
}

void ImageBuffer::clamp() {
    for (double& v : data_) v = std::clamp(v, 0.0, 1.0);
}

bool ImageBuffer::is_valid() const {
    if (width_ < 0 || height_ < 0) return false;
    if (data_.size() != static_cast<std::size_t>(width_) * height_ * kChannels) return false;
    return std::all_of(data_.begin(), data_.end(), [](double v) { return v >= 0.0 && v <= 1.0; });
}

GrayImage to_gray(const ImageBuffer& image) {
    GrayImage gray(image.width(), image.height());
    const auto src = image.data();
    for (std::size_t i = 0; i < gray.values.size(); ++i) {
        gray.values[i] = 0.299 * src[3 * i] + 0.587 * src[3 * i + 1] + 0.114 * src[3 * i + 2];
    }
    return gray;
}

GrayImage resize_bilinear(const GrayImage& src, int width, int height) {
    if (src.width == width && src.height == height) return src;
    GrayImage dst(width, height);
    const double sx = static_cast<double>(src.width) / width;
    const double sy = static_cast<double>(src.height) / height;
    for (int y = 0; y < height; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(src.height - 1));
        const int y0 = static_cast<int>(std::floor(fy));
        const int y1 = std::min(y0 + 1, src.height - 1);
        const double wy = fy - y0;
        for (int x = 0; x < width; ++x) {
            double fx = (x + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(src.width - 1));
            const int x0 = static_cast<int>(std::floor(fx));
            const int x1 = std::min(x0 + 1, src.width - 1);
            const double wx = fx - x0;
            const double top = src.at(x0, y0) * (1.0 - wx) + src.at(x1, y0) * wx;
            const double bottom = src.at(x0, y1) * (1.0 - wx) + src.at(x1, y1) * wx;
            dst.at(x, y) = top * (1.0 - wy) + bottom * wy;
        }
    }
    return dst;
}

}  // namespace oadg
