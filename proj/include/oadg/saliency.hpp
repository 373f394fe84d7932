#pragma once

#include "oadg/image.hpp"

namespace oadg {

/// Per-pixel saliency in [0, 1], same dims as the source image.
using SaliencyMap = GrayImage;

struct SaliencyConfig {
    int work_size = 64;
    double log_epsilon = 1e-8;
    /// Gaussian sigma as a fraction of work_size.
    double blur_sigma_ratio = 1.0 / 16.0;
};

/// Spectral-residual saliency. The image is reduced to luma, resized to a
/// square working grid, and the log-amplitude spectrum minus its 3x3 local
/// average is transformed back with the original phase. The squared magnitude
/// is Gaussian-smoothed, min-max normalized, and resized to the source dims.
/// A featureless (constant) working image yields the all-zero map.
SaliencyMap spectral_residual_map(const ImageBuffer& image, const SaliencyConfig& config = {});

/// Mean saliency under the box. Throws BoxOutOfBounds.
double object_saliency_score(const SaliencyMap& map, const BBox& bbox);

namespace saliency_detail {

/// Filters shared by the pipeline; exposed so tests can exercise them directly.
/// Both use reflect-101 borders.
GrayImage box_filter3(const GrayImage& src);
GrayImage gaussian_blur(const GrayImage& src, double sigma);
/// Min-max normalization to [0, 1]; constant input gives all zeros.
void normalize_min_max(GrayImage& img);
int clamped_work_size(int requested, int width, int height);

}  // namespace saliency_detail

}  // namespace oadg
