#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "oadg/image.hpp"

namespace oadg {

/// Raw per-cell descriptor: mean RGB (3), RGB variance (3), 8-bin gray
/// histogram as fractions (8), mean Sobel magnitude (1).
inline constexpr int kRawCellFeatures = 15;

/// One row per grid cell (row-major over the grid), kRawCellFeatures columns.
Eigen::MatrixXd raw_cell_features(const ImageBuffer& image, int grid);

/// Standardization followed by a frozen random linear lift to `lifted_dim`.
struct FeatureExtractor {
    int grid = 8;
    Eigen::VectorXd mean;   // kRawCellFeatures
    Eigen::VectorXd scale;  // 1 / std, kRawCellFeatures
    Eigen::MatrixXd lift;   // lifted_dim x kRawCellFeatures

    int lifted_dim() const { return static_cast<int>(lift.rows()); }

    /// Statistics come from `training_images` only; the lift is Gaussian with
    /// variance 1 / kRawCellFeatures drawn from `lift_seed`.
    static FeatureExtractor fit(const std::vector<const ImageBuffer*>& training_images, int grid, int lifted_dim,
                                std::uint64_t lift_seed);

    /// grid*grid rows, lifted_dim columns.
    Eigen::MatrixXd operator()(const ImageBuffer& image) const;
};

nlohmann::json to_json(const FeatureExtractor& extractor);
FeatureExtractor feature_extractor_from_json(const nlohmann::json& j);

}  // namespace oadg
