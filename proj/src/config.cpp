#include "oadg/config.hpp"

#include <fstream>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "oadg/error.hpp"

namespace oadg {

namespace {

using nlohmann::json;

// Reads the keys of one JSON object, remembering which ones were consumed so
// leftovers can be reported as unknown.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw Error(ErrorCode::ConfigError, path_ + " must be an object");
    }

    template <typename T>
    void read(const char* key, T& out) {
        known_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception&) {
            throw Error(ErrorCode::ConfigError, "wrong type for " + name(key));
        }
    }

    template <typename T, std::size_t N>
    void read_array(const char* key, std::array<T, N>& out) {
        known_.insert(key);
        if (!j_.contains(key)) return;
        std::vector<T> values;
        read_vector(key, values);
        if (values.size() != N) throw Error(ErrorCode::ConfigError, name(key) + " needs " + std::to_string(N) + " values");
        std::copy(values.begin(), values.end(), out.begin());
    }

    template <typename T>
    void read_vector(const char* key, std::vector<T>& out) {
        read(key, out);
    }

    bool has(const char* key) {
        known_.insert(key);
        return j_.contains(key);
    }

    Section child(const char* key) {
        known_.insert(key);
        return Section(j_.at(key), name(key));
    }

    void finish() const {
        for (const auto& item : j_.items()) {
            if (!known_.count(item.key())) throw Error(ErrorCode::ConfigError, "unknown key " + name(item.key()));
        }
    }

    std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> known_;
};

void read_synth(Section s, SynthConfig& c) {
    s.read("image_size", c.image_size);
    s.read("grid", c.grid);
    s.read("classes", c.classes);
    s.read("min_objects", c.min_objects);
    s.read("max_objects", c.max_objects);
    s.read("min_object_size", c.min_object_size);
    s.read("max_object_size", c.max_object_size);
    s.read("object_gap", c.object_gap);
    s.read("train", c.train_count);
    s.read("test", c.test_count);
    s.read("val", c.val_count);
    s.finish();
}

void read_oamix(Section s, OamixConfig& c) {
    if (s.has("saliency")) {
        Section sal = s.child("saliency");
        sal.read("work_size", c.saliency.work_size);
        sal.read("log_epsilon", c.saliency.log_epsilon);
        sal.read("blur_sigma_ratio", c.saliency.blur_sigma_ratio);
        sal.finish();
    }
    if (s.has("transforms")) {
        Section t = s.child("transforms");
        std::vector<std::string> pool;
        t.read("pool", pool);
        if (!pool.empty()) {
            c.transforms.pool.clear();
            for (const auto& name : pool) {
                const auto kind = parse_transform_kind(name);
                if (!kind) throw Error(ErrorCode::ConfigError, "unknown transform " + name);
                c.transforms.pool.push_back(*kind);
            }
        }
        t.read("max_chain", c.transforms.max_chain);
        t.read("magnitude_min", c.transforms.magnitude_min);
        t.read("magnitude_max", c.transforms.magnitude_max);
        t.finish();
    }
    s.read("min_random_boxes", c.min_random_boxes);
    s.read("max_random_boxes", c.max_random_boxes);
    s.read("random_box_min_fraction", c.random_box_min_fraction);
    s.read("random_box_max_fraction", c.random_box_max_fraction);
    s.read("saliency_threshold", c.saliency_threshold);
    s.read("high_alpha", c.high_alpha);
    s.read("high_beta", c.high_beta);
    s.read("low_alpha", c.low_alpha);
    s.read("low_beta", c.low_beta);
    s.finish();
}

void read_train(Section s, TrainConfig& c) {
    s.read("epochs", c.epochs);
    s.read("lr", c.lr);
    s.read("momentum", c.momentum);
    s.read("batch_size", c.batch_size);
    s.read("hidden", c.hidden);
    s.read("lifted_dim", c.lifted_dim);
    s.read("head_hidden", c.head_hidden);
    s.read("head_out", c.head_out);
    s.read("label_threshold", c.label_threshold);
    s.read("bg_ratio", c.bg_ratio);
    s.read("contrastive_group", c.contrastive_group);
    s.read("score_threshold", c.score_threshold);
    if (s.has("oamix")) read_oamix(s.child("oamix"), c.oamix);
    s.finish();
}

void read_corruptions(Section s, CorruptionTables& c) {
    s.read_array("gaussian_sigma", c.gaussian_sigma);
    s.read_array("shot_photons", c.shot_photons);
    s.read_array("impulse_amount", c.impulse_amount);
    s.read_array("defocus_radius", c.defocus_radius);
    s.read_array("motion_length", c.motion_length);
    s.read("motion_angle_degrees", c.motion_angle_degrees);
    s.read_array("fog_alpha", c.fog_alpha);
    s.read("fog_level", c.fog_level);
    s.read_array("brightness_delta", c.brightness_delta);
    s.read_array("contrast_factor", c.contrast_factor);
    s.read_array("pixelate_block", c.pixelate_block);
    s.read_array("jpeg_quality", c.jpeg_quality);
    s.finish();
}

void require(bool ok, const std::string& message) {
    if (!ok) throw Error(ErrorCode::ConfigError, message);
}

}  // namespace

RunConfig parse_run_config(const nlohmann::json& j) {
    RunConfig c;
    Section root(j, "");
    root.read("seed", c.seed);
    if (root.has("synth")) read_synth(root.child("synth"), c.synth);
    if (root.has("train")) read_train(root.child("train"), c.train);
    if (root.has("hyper")) {
        Section h = root.child("hyper");
        h.read("tau", c.hyper.tau);
        h.read("lambda", c.hyper.lambda);
        h.read("gamma", c.hyper.gamma);
        h.finish();
    }
    if (root.has("corruptions")) read_corruptions(root.child("corruptions"), c.corruptions);
    if (root.has("gates")) {
        Section g = root.child("gates");
        g.read("min_mpc_gain", c.gates.min_mpc_gain);
        g.read("clean_tolerance", c.gates.clean_tolerance);
        g.read("seeds", c.gates.seeds);
        g.finish();
    }
    root.finish();
    validate(c);
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::MissingFile, path.string());
    try {
        return parse_run_config(json::parse(in));
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::ConfigError, path.string() + ": " + e.what());
    }
}

void validate(const RunConfig& c) {
    require(c.hyper.tau > 0.0, "hyper.tau must be positive");
    require(c.hyper.lambda >= 0.0, "hyper.lambda must be non-negative");
    require(c.hyper.gamma >= 0.0, "hyper.gamma must be non-negative");
    try {
        validate(c.synth);
    } catch (const Error& e) {
        throw Error(ErrorCode::ConfigError, e.what());
    }
    require(c.synth.train_count > 0 && c.synth.test_count > 0 && c.synth.val_count >= 0, "synth split sizes");
    require(c.train.epochs > 0 && c.train.batch_size > 0, "train.epochs and train.batch_size must be positive");
    require(c.train.lr > 0.0 && c.train.momentum >= 0.0 && c.train.momentum < 1.0, "train.lr or train.momentum");
    require(c.train.hidden > 0 && c.train.lifted_dim > 0 && c.train.head_hidden > 0 && c.train.head_out > 0,
            "layer sizes must be positive");
    require(c.train.bg_ratio >= 0.0 && c.train.contrastive_group > 0, "train.bg_ratio or train.contrastive_group");
    const auto& t = c.train.oamix.transforms;
    require(!t.pool.empty() && t.max_chain >= 1, "transform pool and chain length");
    require(t.magnitude_min >= 1 && t.magnitude_min <= t.magnitude_max && t.magnitude_max <= 10, "transform magnitudes");
    require(c.gates.seeds >= 1, "gates.seeds must be at least 1");
}

nlohmann::json to_json(const RunConfig& c) {
    std::vector<std::string> pool;
    for (auto k : c.train.oamix.transforms.pool) pool.emplace_back(to_string(k));
    const auto& o = c.train.oamix;
    const auto& t = c.corruptions;
    return {{"seed", c.seed},
            {"synth",
             {{"image_size", c.synth.image_size},
              {"grid", c.synth.grid},
              {"classes", c.synth.classes},
              {"min_objects", c.synth.min_objects},
              {"max_objects", c.synth.max_objects},
              {"min_object_size", c.synth.min_object_size},
              {"max_object_size", c.synth.max_object_size},
              {"object_gap", c.synth.object_gap},
              {"train", c.synth.train_count},
              {"test", c.synth.test_count},
              {"val", c.synth.val_count}}},
            {"train",
             {{"epochs", c.train.epochs},
              {"lr", c.train.lr},
              {"momentum", c.train.momentum},
              {"batch_size", c.train.batch_size},
              {"hidden", c.train.hidden},
              {"lifted_dim", c.train.lifted_dim},
              {"head_hidden", c.train.head_hidden},
              {"head_out", c.train.head_out},
              {"label_threshold", c.train.label_threshold},
              {"bg_ratio", c.train.bg_ratio},
              {"contrastive_group", c.train.contrastive_group},
              {"score_threshold", c.train.score_threshold},
              {"oamix",
               {{"saliency",
                 {{"work_size", o.saliency.work_size},
                  {"log_epsilon", o.saliency.log_epsilon},
                  {"blur_sigma_ratio", o.saliency.blur_sigma_ratio}}},
                {"transforms",
                 {{"pool", pool},
                  {"max_chain", o.transforms.max_chain},
                  {"magnitude_min", o.transforms.magnitude_min},
                  {"magnitude_max", o.transforms.magnitude_max}}},
                {"min_random_boxes", o.min_random_boxes},
                {"max_random_boxes", o.max_random_boxes},
                {"random_box_min_fraction", o.random_box_min_fraction},
                {"random_box_max_fraction", o.random_box_max_fraction},
                {"saliency_threshold", o.saliency_threshold},
                {"high_alpha", o.high_alpha},
                {"high_beta", o.high_beta},
                {"low_alpha", o.low_alpha},
                {"low_beta", o.low_beta}}}}},
            {"hyper", {{"tau", c.hyper.tau}, {"lambda", c.hyper.lambda}, {"gamma", c.hyper.gamma}}},
            {"corruptions",
             {{"gaussian_sigma", t.gaussian_sigma},
              {"shot_photons", t.shot_photons},
              {"impulse_amount", t.impulse_amount},
              {"defocus_radius", t.defocus_radius},
              {"motion_length", t.motion_length},
              {"motion_angle_degrees", t.motion_angle_degrees},
              {"fog_alpha", t.fog_alpha},
              {"fog_level", t.fog_level},
              {"brightness_delta", t.brightness_delta},
              {"contrast_factor", t.contrast_factor},
              {"pixelate_block", t.pixelate_block},
              {"jpeg_quality", t.jpeg_quality}}},
            {"gates",
             {{"min_mpc_gain", c.gates.min_mpc_gain},
              {"clean_tolerance", c.gates.clean_tolerance},
              {"seeds", c.gates.seeds}}}};
}

}  // namespace oadg
