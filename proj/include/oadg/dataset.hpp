#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "oadg/image.hpp"

namespace oadg {

struct Annotation {
    BBox bbox;
    int class_id = 0;

    friend bool operator==(const Annotation&, const Annotation&) = default;
};

struct SampleRecord {
    ImageBuffer image;
    std::vector<Annotation> annotations;
    std::string id;
};

struct Dataset {
    std::vector<std::string> classes;
    std::vector<SampleRecord> samples;

    int num_classes() const { return static_cast<int>(classes.size()); }
};

/// Reads `<root>/annotations.json` and every image it references.
/// Throws Error with MissingFile, MalformedJson, BoxOutOfBounds or UnknownClassId.
Dataset load_dataset(const std::filesystem::path& root, int jobs = 1);

/// Writes `<root>/annotations.json` plus one PNG per sample named `<id>.png`.
/// The directory is created if needed.
void save_dataset(const Dataset& dataset, const std::filesystem::path& root, int jobs = 1);

/// Human-readable descriptions of every violated invariant; empty iff valid.
std::vector<std::string> validate_dataset(const Dataset& dataset);

}  // namespace oadg
