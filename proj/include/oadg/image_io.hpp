#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "oadg/image.hpp"

namespace oadg {

/// 8-bit RGB PNG; every channel stored as round(v * 255).
void save_image(const ImageBuffer& image, const std::filesystem::path& path);
void save_gray(const GrayImage& image, const std::filesystem::path& path);
ImageBuffer load_image(const std::filesystem::path& path);

std::uint8_t to_byte(double v);

/// Baseline JPEG encode followed by decode, entirely in memory.
ImageBuffer jpeg_round_trip(const ImageBuffer& image, int quality);

}  // namespace oadg
