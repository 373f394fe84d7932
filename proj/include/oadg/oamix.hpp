#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "oadg/dataset.hpp"
#include "oadg/rng.hpp"
#include "oadg/saliency.hpp"
#include "oadg/transforms.hpp"

namespace oadg {

struct Region {
    RegionLevel level = RegionLevel::Image;
    BBox rect;
    double saliency = 0.0;
    std::optional<int> class_id;  // Foreground only
};

struct MixPlan {
    std::vector<Region> regions;
    std::vector<TransformChain> chains;
    std::vector<double> weights;
};

struct OamixOutput {
    ImageBuffer image;
    std::vector<Annotation> annotations;
    MixPlan plan;
};

struct OamixConfig {
    SaliencyConfig saliency;
    TransformConfig transforms;
    int min_random_boxes = 1;
    int max_random_boxes = 3;
    double random_box_min_fraction = 0.1;
    double random_box_max_fraction = 0.4;
    /// Regions scoring at or above the threshold draw m from the "high" Beta,
    /// the rest from the "low" Beta, which keeps more of the original image.
    double saliency_threshold = 0.4;
    double high_alpha = 1.0;
    double high_beta = 1.0;
    double low_alpha = 1.0;
    double low_beta = 4.0;
    /// Test hooks: pin every mixing weight, or replace every chain with the identity.
    std::optional<double> force_weight;
    bool force_identity = false;
};

/// Image region first, then random boxes, then one Foreground region per annotation.
std::vector<Region> partition_regions(int width, int height, const std::vector<Annotation>& annotations, Rng& rng,
                                      const OamixConfig& config = {});

/// Index of the region governing each pixel, row-major. Foreground beats
/// RandomBox beats Image; within a level the smaller box wins, then the lower index.
std::vector<int> precedence_owner(int width, int height, const std::vector<Region>& regions);

double sample_mixing_weight(double saliency, Rng& rng, const OamixConfig& config = {});

/// Object-aware mixing of one sample. `saliency` may carry a map already
/// computed on the same original image.
OamixOutput oamix(const SampleRecord& sample, Rng& rng, const OamixConfig& config = {},
                  const SaliencyMap* saliency = nullptr);

/// Batch driver: sample i uses the stream seeded by stream_seed(seed, i), so
/// results do not depend on `jobs`.
std::vector<OamixOutput> oamix_batch(const std::vector<SampleRecord>& samples, std::uint64_t seed,
                                     const OamixConfig& config = {}, int jobs = 1);

nlohmann::json mixplan_to_json(const MixPlan& plan);

}  // namespace oadg
