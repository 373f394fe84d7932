#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace oadg {

/// Axis-aligned box in integer pixel units, (x, y) is the top-left corner.
struct BBox {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;

    int right() const { return x + w; }
    int bottom() const { return y + h; }
    long area() const { return static_cast<long>(w) * h; }
    bool contains(int px, int py) const { return px >= x && px < x + w && py >= y && py < y + h; }
    bool valid_within(int width, int height) const {
        return w > 0 && h > 0 && x >= 0 && y >= 0 && x + w <= width && y + h <= height;
    }

    friend bool operator==(const BBox&, const BBox&) = default;
};

/// Interleaved RGB image with real-valued channels in [0, 1], row-major.
class ImageBuffer {
public:
    static constexpr int kChannels = 3;

    ImageBuffer() = default;
    ImageBuffer(int width, int height, double fill = 0.0);
    ImageBuffer(int width, int height, std::vector<double> data);

    int width() const { return width_; }
    int height() const { return height_; }
    bool empty() const { return width_ <= 0 || height_ <= 0; }
    std::size_t size() const { return data_.size(); }

    double& at(int x, int y, int c) { return data_[index(x, y, c)]; }
    double at(int x, int y, int c) const { return data_[index(x, y, c)]; }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    std::size_t index(int x, int y, int c) const {
        return (static_cast<std::size_t>(y) * width_ + x) * kChannels + c;
    }

    /// Clamp every value to [0, 1].
    void clamp();
    /// True when the buffer length matches the dims and all values lie in [0, 1].
    bool is_valid() const;

    friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<double> data_;
};

/// Single-channel real image, row-major. Used for gray levels and saliency maps.
struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<double> values;

    GrayImage() = default;
    GrayImage(int w, int h, double fill = 0.0)
        : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill) {}

    double& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
    double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }

    friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

/// Luma conversion with 0.299 R + 0.587 G + 0.114 B weights.
GrayImage to_gray(const ImageBuffer& image);

/// Bilinear resize with half-pixel centers and edge clamping.
GrayImage resize_bilinear(const GrayImage& src, int width, int height);

}  // namespace oadg
