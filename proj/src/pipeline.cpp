#include "oadg/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <sstream>

#include <nlohmann/json.hpp>

#include "oadg/error.hpp"
#include "oadg/image_io.hpp"
#include "oadg/parallel.hpp"
#include "oadg/synth.hpp"

namespace oadg {

namespace {

constexpr std::uint64_t kCorruptionTag = 0xC0;

std::size_t kind_index(CorruptionKind kind) {
    const auto& kinds = all_corruption_kinds();
    return static_cast<std::size_t>(std::find(kinds.begin(), kinds.end(), kind) - kinds.begin());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out << text;
}

std::vector<ClassLabelledBox> ground_truth(const SampleRecord& s) {
    std::vector<ClassLabelledBox> out;
    for (const auto& a : s.annotations) out.push_back({a.bbox, a.class_id});
    return out;
}

}  // namespace

std::uint64_t corruption_seed(std::uint64_t seed, const CorruptionSpec& spec, std::size_t index) {
    const std::uint64_t cell = kCorruptionTag + kind_index(spec.kind) * 8 + static_cast<std::uint64_t>(spec.severity);
    return stream_seed(seed, cell, index);
}

Dataset corrupt_dataset(const Dataset& dataset, const CorruptionSpec& spec, std::uint64_t seed,
                        const CorruptionTables& tables, int jobs) {
    Dataset out;
    out.classes = dataset.classes;
    out.samples.resize(dataset.samples.size());
    parallel_for(dataset.samples.size(), jobs, [&](std::size_t i) {
        Rng rng = make_rng(corruption_seed(seed, spec, i));
        const auto& s = dataset.samples[i];
        out.samples[i] = SampleRecord{corrupt(s.image, spec, rng, tables), s.annotations, s.id};
    });
    return out;
}

void write_corrupted_suite(const Dataset& dataset, const std::filesystem::path& out, std::uint64_t seed,
                           const CorruptionTables& tables, int jobs) {
    for (CorruptionKind kind : all_corruption_kinds()) {
        for (int severity = 1; severity <= 5; ++severity) {
            const CorruptionSpec spec{kind, severity};
            save_dataset(corrupt_dataset(dataset, spec, seed, tables, jobs),
                         out / std::string(to_string(kind)) / std::to_string(severity), jobs);
        }
    }
}

namespace {

double dataset_map(const Model& model, const Dataset& dataset, double score_threshold, int jobs) {
    return evaluate_dataset_map(model, dataset, score_threshold, jobs);
}

// Corrupts and scores one image at a time so the 50 corrupted copies of the
// test split are never held in memory together.
double corrupted_map(const Model& model, const Dataset& test, const CorruptionSpec& spec, std::uint64_t seed,
                     const CorruptionTables& tables, double score_threshold, int jobs) {
    std::vector<std::vector<Detection>> dets(test.samples.size());
    std::vector<std::vector<ClassLabelledBox>> gts(test.samples.size());
    parallel_for(test.samples.size(), jobs, [&](std::size_t i) {
        Rng rng = make_rng(corruption_seed(seed, spec, i));
        dets[i] = detect(model, corrupt(test.samples[i].image, spec, rng, tables), score_threshold);
        gts[i] = ground_truth(test.samples[i]);
    });
    return evaluate_map(dets, gts, model.num_classes()).map;
}

}  // namespace

EvalReport evaluate_robustness(const Model& model, const Dataset& test, std::uint64_t seed,
                               const CorruptionTables& tables, double score_threshold, int jobs) {
    EvalReport report;
    report.severities = {1, 2, 3, 4, 5};
    report.clean_map = dataset_map(model, test, score_threshold, jobs);
    for (CorruptionKind kind : all_corruption_kinds()) {
        report.corruptions.emplace_back(to_string(kind));
        std::vector<double> row;
        for (int severity : report.severities) {
            row.push_back(corrupted_map(model, test, {kind, severity}, seed, tables, score_threshold, jobs));
        }
        report.performance.push_back(std::move(row));
    }
    report.mpc = mpc(report.performance);
    return report;
}

EvalReport evaluate_directories(const Model& model, const std::filesystem::path& clean,
                                const std::filesystem::path& corrupted, double score_threshold, int jobs) {
    if (!std::filesystem::is_directory(corrupted)) throw Error(ErrorCode::MissingFile, corrupted.string());
    EvalReport report;
    report.clean_map = dataset_map(model, load_dataset(clean, jobs), score_threshold, jobs);
    std::vector<int> severities;
    for (CorruptionKind kind : all_corruption_kinds()) {
        const auto kind_dir = corrupted / std::string(to_string(kind));
        if (!std::filesystem::is_directory(kind_dir)) continue;
        std::vector<int> found;
        for (int severity = 1; severity <= 5; ++severity) {
            if (std::filesystem::is_directory(kind_dir / std::to_string(severity))) found.push_back(severity);
        }
        if (report.corruptions.empty()) severities = found;
        report.corruptions.emplace_back(to_string(kind));
        std::vector<double> row;
        for (int severity : found) {
            const Dataset d = load_dataset(kind_dir / std::to_string(severity), jobs);
            row.push_back(dataset_map(model, d, score_threshold, jobs));
        }
        report.performance.push_back(std::move(row));
    }
    if (report.corruptions.empty()) throw Error(ErrorCode::IncompleteMatrix, "no corruption directories found");
    report.severities = severities;
    report.mpc = mpc(report.performance);
    for (const auto& row : report.performance) {
        if (row.size() != severities.size()) throw Error(ErrorCode::IncompleteMatrix, "severity sets differ by kind");
    }
    return report;
}

std::vector<Eigen::MatrixXd> features_by_class(const Model& model, const Dataset& dataset, double label_threshold) {
    const int k = model.num_classes();
    const int grid = model.features.grid;
    std::vector<std::vector<Eigen::VectorXd>> rows(static_cast<std::size_t>(k) + 1);
    for (const auto& s : dataset.samples) {
        const ForwardResult f = forward(model.params, model.features(s.image), false);
        const auto labels = assign_labels(s.image.width(), grid, s.annotations, label_threshold);
        for (std::size_t c = 0; c < labels.size(); ++c) {
            const std::size_t cls = labels[c].background ? static_cast<std::size_t>(k)
                                                         : static_cast<std::size_t>(labels[c].class_id);
            rows[cls].push_back(f.hidden.row(static_cast<Eigen::Index>(c)).transpose());
        }
    }
    std::vector<Eigen::MatrixXd> out;
    for (const auto& group : rows) {
        Eigen::MatrixXd m(static_cast<Eigen::Index>(group.size()), model.params.hidden_dim());
        for (std::size_t r = 0; r < group.size(); ++r) m.row(static_cast<Eigen::Index>(r)) = group[r].transpose();
        out.push_back(std::move(m));
    }
    return out;
}

std::string matrix_csv(const Eigen::MatrixXd& m, const std::vector<std::string>& labels) {
    std::ostringstream out;
    out.precision(17);
    out << "class";
    for (const auto& l : labels) out << ',' << l;
    out << '\n';
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        out << labels[static_cast<std::size_t>(r)];
        for (Eigen::Index c = 0; c < m.cols(); ++c) out << ',' << m(r, c);
        out << '\n';
    }
    return out.str();
}

nlohmann::json to_json(const ReproSummary& s) {
    nlohmann::json seeds = nlohmann::json::array();
    for (const auto& r : s.seeds) {
        seeds.push_back({{"seed", r.seed},
                         {"baseline", {{"clean_mAP", r.baseline.clean_map}, {"mPC", r.baseline.mpc}}},
                         {"oadg", {{"clean_mAP", r.oadg.clean_map}, {"mPC", r.oadg.mpc}}},
                         {"delta", {{"clean_mAP", r.oadg.clean_map - r.baseline.clean_map},
                                    {"mPC", r.oadg.mpc - r.baseline.mpc}}}});
    }
    ModeResult base, oadg;
    for (const auto& r : s.seeds) {
        base.clean_map += r.baseline.clean_map;
        base.mpc += r.baseline.mpc;
        oadg.clean_map += r.oadg.clean_map;
        oadg.mpc += r.oadg.mpc;
    }
    const double n = std::max<std::size_t>(s.seeds.size(), 1);
    return {{"seeds", seeds},
            {"mean",
             {{"baseline", {{"clean_mAP", base.clean_map / n}, {"mPC", base.mpc / n}}},
              {"oadg", {{"clean_mAP", oadg.clean_map / n}, {"mPC", oadg.mpc / n}}},
              {"delta", {{"clean_mAP", s.mean_clean_delta}, {"mPC", s.mean_mpc_gain}}}}},
            {"gates", {{"robustness_gain", s.robustness_gate}, {"clean_guardrail", s.clean_gate}}},
            {"passed", s.passed()}};
}

ReproSummary run_repro(const RunConfig& config, const std::filesystem::path& out, int jobs,
                       const std::function<void(const std::string&)>& progress) {
    auto note = [&](const std::string& msg) {
        if (progress) progress(msg);
    };
    std::filesystem::create_directories(out);
    ReproSummary summary;
    for (int k = 0; k < config.gates.seeds; ++k) {
        const std::uint64_t seed = config.seed + static_cast<std::uint64_t>(k);
        const auto dir = out / ("seed_" + std::to_string(seed));
        std::filesystem::create_directories(dir);

        SynthConfig synth = config.synth;
        synth.seed = seed;
        note("seed " + std::to_string(seed) + ": synth");
        const SynthSplits splits = generate_splits(synth, jobs);

        SeedResult result;
        result.seed = seed;
        for (TrainMode mode : {TrainMode::Baseline, TrainMode::Oadg}) {
            const std::string name = mode == TrainMode::Baseline ? "baseline" : "oadg";
            note("seed " + std::to_string(seed) + ": train " + name);
            const TrainResult trained = train(splits.train, splits.val, config.train, config.hyper, mode, seed, jobs);
            note("seed " + std::to_string(seed) + ": eval " + name);
            const EvalReport report = evaluate_robustness(trained.model, splits.test, seed, config.corruptions,
                                                          config.train.score_threshold, jobs);
            save_model(trained.model, dir / (name + "_params.json"));
            write_text(dir / (name + "_log.csv"), log_csv(trained.log));
            write_text(dir / (name + "_report.json"), to_json(report).dump(2) + "\n");
            write_text(dir / (name + "_performance.csv"), performance_csv(report));
            ModeResult& r = mode == TrainMode::Baseline ? result.baseline : result.oadg;
            r.clean_map = report.clean_map;
            r.mpc = report.mpc;
        }
        summary.seeds.push_back(result);
    }
    for (const auto& r : summary.seeds) {
        summary.mean_mpc_gain += r.oadg.mpc - r.baseline.mpc;
        summary.mean_clean_delta += r.oadg.clean_map - r.baseline.clean_map;
    }
    summary.mean_mpc_gain /= static_cast<double>(summary.seeds.size());
    summary.mean_clean_delta /= static_cast<double>(summary.seeds.size());
    summary.robustness_gate = summary.mean_mpc_gain >= config.gates.min_mpc_gain;
    summary.clean_gate = summary.mean_clean_delta >= -config.gates.clean_tolerance;
    write_text(out / "config.json", to_json(config).dump(2) + "\n");
    write_text(out / "report.json", to_json(summary).dump(2) + "\n");
    return summary;
}

std::uint64_t directory_digest(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
        if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::uint64_t h = 1469598103934665603ULL;
    auto feed = [&h](unsigned char byte) {
        h ^= byte;
        h *= 1099511628211ULL;
    };
    for (const auto& f : files) {
        for (unsigned char c : std::filesystem::relative(f, dir).generic_string()) feed(c);
        feed(0);
        std::ifstream in(f, std::ios::binary);
        for (std::istreambuf_iterator<char> it(in), end; it != end; ++it) feed(static_cast<unsigned char>(*it));
    }
    return h;
}

}  // namespace oadg
