#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oadg/dataset.hpp"
#include "oadg/rng.hpp"

namespace oadg {

enum class ShapeClass { Circle = 0, Triangle = 1, Square = 2 };

struct SynthConfig {
    int image_size = 64;
    int grid = 8;  // cells per side
    std::vector<std::string> classes{"circle", "triangle", "square"};
    int min_objects = 1;
    int max_objects = 4;
    int min_object_size = 18;
    int max_object_size = 30;
    /// Minimum free space between object boxes, in pixels.
    int object_gap = 6;
    int train_count = 2000;
    int test_count = 500;
    int val_count = 200;
    std::uint64_t seed = 0;

    int cell_size() const { return image_size / grid; }
    int num_classes() const { return static_cast<int>(classes.size()); }
};

/// Throws ConfigError when the image size is not a multiple of the grid.
void validate(const SynthConfig& config);

/// One scene: a smooth noise background with 1..4 flat-colored shapes, each
/// annotated with its tight box. Class hues are well separated; saturation
/// and value vary per object.
SampleRecord generate_scene(Rng& rng, const SynthConfig& config, const std::string& id = "s0");

struct SynthSplits {
    Dataset train;
    Dataset val;
    Dataset test;
};

/// Scene i of a split uses its own stream, so splits are reproducible and
/// independent of each other's sizes.
SynthSplits generate_splits(const SynthConfig& config, int jobs = 1);
Dataset generate_dataset(const SynthConfig& config, int count, std::uint64_t split_tag, const std::string& prefix,
                         int jobs = 1);

}  // namespace oadg
