#include "oadg/dataset.hpp"

#include <fstream>
#include <set>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "oadg/error.hpp"
#include "oadg/image_io.hpp"
#include "oadg/parallel.hpp"

namespace oadg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct ImageEntry {
    std::string id;
    std::string file;
    int width = 0;
    int height = 0;
};

template <typename T>
T require(const json& obj, const char* key, const std::string& context) {
    if (!obj.is_object() || !obj.contains(key)) {
        throw Error(ErrorCode::MalformedJson, context + ": missing key '" + key + "'");
    }
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::MalformedJson, context + ": bad value for '" + key + "': " + e.what());
    }
}

}  // namespace

Dataset load_dataset(const fs::path& root, int jobs) {
    const fs::path manifest = root / "annotations.json";
    if (!fs::exists(manifest)) throw Error(ErrorCode::MissingFile, manifest.string());

    json doc;
    {
        std::ifstream in(manifest);
        if (!in) throw Error(ErrorCode::IoError, "cannot open " + manifest.string());
        try {
            doc = json::parse(in);
        } catch (const json::parse_error& e) {
            throw Error(ErrorCode::MalformedJson, manifest.string() + ": " + e.what());
        }
    }
    if (!doc.is_object()) throw Error(ErrorCode::MalformedJson, "top level must be an object");

    Dataset dataset;
    dataset.classes = require<std::vector<std::string>>(doc, "classes", "annotations.json");
    const auto images = require<json>(doc, "images", "annotations.json");
    const auto annotations = require<json>(doc, "annotations", "annotations.json");
    if (!images.is_array() || !annotations.is_array()) {
        throw Error(ErrorCode::MalformedJson, "'images' and 'annotations' must be arrays");
    }

    std::vector<ImageEntry> entries;
    std::unordered_map<std::string, std::size_t> by_id;
    for (const auto& item : images) {
        ImageEntry e;
        e.id = require<std::string>(item, "id", "image entry");
        e.file = require<std::string>(item, "file", "image " + e.id);
        e.width = require<int>(item, "width", "image " + e.id);
        e.height = require<int>(item, "height", "image " + e.id);
        if (!by_id.emplace(e.id, entries.size()).second) {
            throw Error(ErrorCode::MalformedJson, "duplicate image id " + e.id);
        }
        entries.push_back(std::move(e));
    }

    dataset.samples.resize(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) dataset.samples[i].id = entries[i].id;

    const int num_classes = dataset.num_classes();
    for (const auto& item : annotations) {
        const auto image_id = require<std::string>(item, "image_id", "annotation");
        const auto box = require<std::vector<int>>(item, "bbox", "annotation of " + image_id);
        const int class_id = require<int>(item, "class_id", "annotation of " + image_id);
        const auto it = by_id.find(image_id);
        if (it == by_id.end()) throw Error(ErrorCode::MalformedJson, "annotation references unknown image " + image_id);
        if (box.size() != 4) throw Error(ErrorCode::MalformedJson, "bbox of " + image_id + " must have 4 entries");
        if (class_id < 0 || class_id >= num_classes) {
            throw Error(ErrorCode::UnknownClassId, image_id + ": class_id " + std::to_string(class_id));
        }
        const ImageEntry& entry = entries[it->second];
        const BBox bbox{box[0], box[1], box[2], box[3]};
        if (!bbox.valid_within(entry.width, entry.height)) throw Error(ErrorCode::BoxOutOfBounds, image_id);
        dataset.samples[it->second].annotations.push_back({bbox, class_id});
    }

    parallel_for(entries.size(), jobs, [&](std::size_t i) {
        ImageBuffer img = load_image(root / entries[i].file);
        if (img.width() != entries[i].width || img.height() != entries[i].height) {
            throw Error(ErrorCode::MalformedJson, entries[i].id + ": declared size does not match image file");
        }
        dataset.samples[i].image = std::move(img);
    });
    return dataset;
}

void save_dataset(const Dataset& dataset, const fs::path& root, int jobs) {
    std::error_code ec;
    fs::create_directories(root, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create " + root.string() + ": " + ec.message());

    json images = json::array();
    json annotations = json::array();
    for (const auto& s : dataset.samples) {
        images.push_back({{"id", s.id}, {"file", s.id + ".png"}, {"width", s.image.width()}, {"height", s.image.height()}});
        for (const auto& a : s.annotations) {
            annotations.push_back({{"image_id", s.id},
                                   {"bbox", {a.bbox.x, a.bbox.y, a.bbox.w, a.bbox.h}},
                                   {"class_id", a.class_id}});
        }
    }
    const json doc = {{"classes", dataset.classes}, {"images", images}, {"annotations", annotations}};
    {
        std::ofstream out(root / "annotations.json");
        if (!out) throw Error(ErrorCode::IoError, "cannot write annotations.json in " + root.string());
        out << doc.dump(1) << '\n';
    }
    parallel_for(dataset.samples.size(), jobs, [&](std::size_t i) {
        save_image(dataset.samples[i].image, root / (dataset.samples[i].id + ".png"));
    });
}

std::vector<std::string> validate_dataset(const Dataset& dataset) {
    std::vector<std::string> violations;
    std::set<std::string> class_names;
    for (const auto& name : dataset.classes) {
        if (!class_names.insert(name).second) violations.push_back("duplicate class name '" + name + "'");
    }
    std::set<std::string> ids;
    const int num_classes = dataset.num_classes();
    for (const auto& s : dataset.samples) {
        if (!ids.insert(s.id).second) violations.push_back("duplicate sample id '" + s.id + "'");
        if (!s.image.is_valid()) violations.push_back(s.id + ": image data invalid (length or range)");
        for (std::size_t k = 0; k < s.annotations.size(); ++k) {
            const auto& a = s.annotations[k];
            const std::string where = s.id + " annotation " + std::to_string(k);
            if (!a.bbox.valid_within(s.image.width(), s.image.height())) {
                violations.push_back(where + ": bbox not inside the image or empty");
            }
            if (a.class_id < 0 || a.class_id >= num_classes) {
                violations.push_back(where + ": class_id out of range");
            }
        }
    }
    return violations;
}

}  // namespace oadg
