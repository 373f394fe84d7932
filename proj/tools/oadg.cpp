// oadg: command-line front end for the OA-DG toy pipeline.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "oadg/config.hpp"
#include "oadg/corruptions.hpp"
#include "oadg/dataset.hpp"
#include "oadg/detector.hpp"
#include "oadg/error.hpp"
#include "oadg/gradcheck.hpp"
#include "oadg/image_io.hpp"
#include "oadg/metrics.hpp"
#include "oadg/oamix.hpp"
#include "oadg/pipeline.hpp"
#include "oadg/saliency.hpp"
#include "oadg/synth.hpp"

namespace fs = std::filesystem;
using namespace oadg;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitGate = 3;
constexpr int kExitIo = 4;

int exit_code_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::ConfigError:
        case ErrorCode::InvalidArgument:
        case ErrorCode::UnknownKind:
        case ErrorCode::WrongOpCategory:
            return kExitConfig;
        case ErrorCode::MissingFile:
        case ErrorCode::MalformedJson:
        case ErrorCode::BoxOutOfBounds:
        case ErrorCode::UnknownClassId:
        case ErrorCode::IoError:
        case ErrorCode::DegenerateImage:
            return kExitIo;
        default:
            return 1;
    }
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out << text;
}

// Options shared by every subcommand that reads a RunConfig.
struct ConfigOptions {
    std::optional<std::string> path;
    std::optional<std::uint64_t> seed;

    void attach(CLI::App* app, bool with_seed = true) {
        app->add_option("--config", path, "JSON run config; flags override its values");
        if (with_seed) app->add_option("--seed", seed, "Global seed");
    }

    RunConfig load() const {
        RunConfig c = path ? load_run_config(*path) : RunConfig{};
        if (seed) c.seed = *seed;
        return c;
    }
};

std::vector<int> parse_severities(const std::string& text) {
    std::vector<int> out;
    const auto dots = text.find("..");
    try {
        if (dots != std::string::npos) {
            const int lo = std::stoi(text.substr(0, dots));
            const int hi = std::stoi(text.substr(dots + 2));
            for (int s = lo; s <= hi; ++s) out.push_back(s);
        } else {
            std::stringstream ss(text);
            std::string item;
            while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
        }
    } catch (const std::exception&) {
        throw Error(ErrorCode::ConfigError, "bad severity list: " + text);
    }
    if (out.empty()) throw Error(ErrorCode::ConfigError, "empty severity list");
    for (int s : out) {
        if (s < 1 || s > 5) throw Error(ErrorCode::ConfigError, "severity out of range 1..5: " + std::to_string(s));
    }
    return out;
}

std::vector<CorruptionKind> parse_kinds(const std::string& text) {
    if (text == "all") return all_corruption_kinds();
    std::vector<CorruptionKind> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_corruption_kind(item));
    if (out.empty()) throw Error(ErrorCode::ConfigError, "empty corruption list");
    return out;
}

fs::path csv_path_for(const fs::path& json_path) {
    fs::path p = json_path;
    p.replace_extension(".csv");
    return p;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Object-aware domain generalization toolkit", "oadg"};
    app.require_subcommand(1);
    int jobs = 1;

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "Generate the synthetic shapes dataset (train/val/test splits)");
    ConfigOptions synth_cfg;
    std::string synth_out;
    std::optional<int> synth_train, synth_test, synth_val;
    synth_cmd->add_option("--out", synth_out, "Output directory")->required();
    synth_cmd->add_option("--train", synth_train, "Number of training scenes");
    synth_cmd->add_option("--test", synth_test, "Number of test scenes");
    synth_cmd->add_option("--val", synth_val, "Number of validation scenes");
    synth_cfg.attach(synth_cmd);
    synth_cmd->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);

    // augment
    auto* augment_cmd = app.add_subcommand("augment", "Apply OA-Mix to a dataset");
    ConfigOptions augment_cfg;
    std::string augment_dataset, augment_out;
    int samples_per_image = 1;
    augment_cmd->add_option("--dataset", augment_dataset, "Input dataset directory")->required();
    augment_cmd->add_option("--out", augment_out, "Output directory")->required();
    augment_cmd->add_option("--samples-per-image", samples_per_image, "Augmented copies per input image")
        ->check(CLI::PositiveNumber);
    augment_cfg.attach(augment_cmd);
    augment_cmd->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);

    // saliency
    auto* saliency_cmd = app.add_subcommand("saliency", "Write the spectral-residual saliency map of an image");
    std::string saliency_in, saliency_out;
    saliency_cmd->add_option("--input", saliency_in, "Input PNG")->required();
    saliency_cmd->add_option("--out", saliency_out, "Output grayscale PNG")->required();
    saliency_cmd->add_option("--jobs", jobs, "Worker threads (unused, accepted for uniformity)")
        ->check(CLI::PositiveNumber);

    // corrupt
    auto* corrupt_cmd = app.add_subcommand("corrupt", "Write corrupted copies of a dataset as out/<kind>/<severity>/");
    ConfigOptions corrupt_cfg;
    std::string corrupt_dataset_dir, corrupt_out, kinds_text = "all", severities_text = "1..5";
    corrupt_cmd->add_option("--dataset", corrupt_dataset_dir, "Input dataset directory")->required();
    corrupt_cmd->add_option("--out", corrupt_out, "Output directory")->required();
    corrupt_cmd->add_option("--kinds", kinds_text, "'all' or a comma-separated list of corruption kinds");
    corrupt_cmd->add_option("--severities", severities_text, "Range 'a..b' or comma-separated list within 1..5");
    corrupt_cfg.attach(corrupt_cmd);
    corrupt_cmd->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);

    // train
    auto* train_cmd = app.add_subcommand("train", "Train the grid detector");
    ConfigOptions train_cfg;
    std::string mode_text = "oadg", train_out, train_log;
    std::optional<std::string> train_data;
    std::optional<int> epochs;
    std::optional<double> lambda, gamma, tau;
    train_cmd->add_option("--mode", mode_text, "Training mode")->check(CLI::IsMember({"baseline", "oadg"}));
    train_cfg.attach(train_cmd);
    train_cmd->add_option("--data", train_data, "Directory with train/ and val/ splits; synthesized from the config when absent");
    train_cmd->add_option("--out", train_out, "Output params.json")->required();
    train_cmd->add_option("--log", train_log, "Output per-epoch log CSV");
    train_cmd->add_option("--epochs", epochs, "Training epochs");
    train_cmd->add_option("--lambda", lambda, "Weight of the object-aware loss");
    train_cmd->add_option("--gamma", gamma, "Weight of the contrastive term");
    train_cmd->add_option("--tau", tau, "Contrastive temperature");
    train_cmd->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate clean mAP and mPC");
    std::string eval_params, eval_clean, eval_corrupted, eval_out;
    double score_threshold = 0.3;
    eval_cmd->add_option("--params", eval_params, "Trained params.json")->required();
    eval_cmd->add_option("--clean", eval_clean, "Clean dataset directory")->required();
    eval_cmd->add_option("--corrupted", eval_corrupted, "Corrupted tree written by 'corrupt'")->required();
    eval_cmd->add_option("--out", eval_out, "Output report.json; the matrix goes next to it as .csv")->required();
    eval_cmd->add_option("--score-threshold", score_threshold, "Detection score threshold");
    eval_cmd->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);

    // featcorr
    auto* featcorr_cmd = app.add_subcommand("featcorr", "Class-wise feature correlation between two domains");
    std::string fc_params, fc_a, fc_b, fc_out;
    featcorr_cmd->add_option("--params", fc_params, "Trained params.json")->required();
    featcorr_cmd->add_option("--domain-a", fc_a, "Dataset directory of domain A")->required();
    featcorr_cmd->add_option("--domain-b", fc_b, "Dataset directory of domain B")->required();
    featcorr_cmd->add_option("--out", fc_out, "Output CSV")->required();
    featcorr_cmd->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);

    // gradcheck
    auto* gradcheck_cmd = app.add_subcommand("gradcheck", "Compare analytic loss gradients with finite differences");
    std::uint64_t gc_seed = 0;
    int gc_trials = 100, gc_joint = 1;
    gradcheck_cmd->add_option("--seed", gc_seed, "Seed");
    gradcheck_cmd->add_option("--trials", gc_trials, "Random batches per loss")->check(CLI::PositiveNumber);
    gradcheck_cmd->add_option("--joint-trials", gc_joint, "End-to-end checks of the joint objective")
        ->check(CLI::NonNegativeNumber);
    gradcheck_cmd->add_option("--jobs", jobs, "Worker threads (unused, accepted for uniformity)")
        ->check(CLI::PositiveNumber);

    // repro
    auto* repro_cmd = app.add_subcommand("repro", "Run the full benchmark and check the acceptance gates");
    ConfigOptions repro_cfg;
    std::string repro_out = "repro";
    repro_cfg.attach(repro_cmd);
    repro_cmd->add_option("--out", repro_out, "Output directory for the report bundle");
    repro_cmd->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (synth_cmd->parsed()) {
            RunConfig c = synth_cfg.load();
            if (synth_train) c.synth.train_count = *synth_train;
            if (synth_test) c.synth.test_count = *synth_test;
            if (synth_val) c.synth.val_count = *synth_val;
            c.synth.seed = c.seed;
            validate(c);
            const SynthSplits splits = generate_splits(c.synth, jobs);
            save_dataset(splits.train, fs::path(synth_out) / "train", jobs);
            save_dataset(splits.val, fs::path(synth_out) / "val", jobs);
            save_dataset(splits.test, fs::path(synth_out) / "test", jobs);
        } else if (augment_cmd->parsed()) {
            const RunConfig c = augment_cfg.load();
            const Dataset input = load_dataset(augment_dataset, jobs);
            std::vector<SampleRecord> sources;
            for (int k = 0; k < samples_per_image; ++k)
                for (const auto& s : input.samples) sources.push_back(s);
            const auto outputs = oamix_batch(sources, c.seed, c.train.oamix, jobs);
            Dataset out;
            out.classes = input.classes;
            std::ostringstream plans;
            for (std::size_t i = 0; i < outputs.size(); ++i) {
                const std::size_t copy = i / input.samples.size();
                const std::string id = sources[i].id + "_" + std::to_string(copy);
                out.samples.push_back({outputs[i].image, outputs[i].annotations, id});
                nlohmann::json line = mixplan_to_json(outputs[i].plan);
                line["id"] = id;
                line["source"] = sources[i].id;
                plans << line.dump() << '\n';
            }
            save_dataset(out, augment_out, jobs);
            write_text(fs::path(augment_out) / "mixplan.jsonl", plans.str());
        } else if (saliency_cmd->parsed()) {
            save_gray(spectral_residual_map(load_image(saliency_in)), saliency_out);
        } else if (corrupt_cmd->parsed()) {
            const RunConfig c = corrupt_cfg.load();
            const auto kinds = parse_kinds(kinds_text);
            const auto severities = parse_severities(severities_text);
            const Dataset input = load_dataset(corrupt_dataset_dir, jobs);
            for (CorruptionKind kind : kinds) {
                for (int severity : severities) {
                    const CorruptionSpec spec{kind, severity};
                    save_dataset(corrupt_dataset(input, spec, c.seed, c.corruptions, jobs),
                                 fs::path(corrupt_out) / std::string(to_string(kind)) / std::to_string(severity), jobs);
                }
            }
        } else if (train_cmd->parsed()) {
            RunConfig c = train_cfg.load();
            if (epochs) c.train.epochs = *epochs;
            if (lambda) c.hyper.lambda = *lambda;
            if (gamma) c.hyper.gamma = *gamma;
            if (tau) c.hyper.tau = *tau;
            validate(c);
            const TrainMode mode = mode_text == "baseline" ? TrainMode::Baseline : TrainMode::Oadg;
            Dataset train_set, val_set;
            if (train_data) {
                train_set = load_dataset(fs::path(*train_data) / "train", jobs);
                if (fs::exists(fs::path(*train_data) / "val")) val_set = load_dataset(fs::path(*train_data) / "val", jobs);
            } else {
                c.synth.seed = c.seed;
                SynthSplits splits = generate_splits(c.synth, jobs);
                train_set = std::move(splits.train);
                val_set = std::move(splits.val);
            }
            const TrainResult result = train(train_set, val_set, c.train, c.hyper, mode, c.seed, jobs);
            if (fs::path(train_out).has_parent_path()) fs::create_directories(fs::path(train_out).parent_path());
            save_model(result.model, train_out);
            if (!train_log.empty()) write_text(train_log, log_csv(result.log));
        } else if (eval_cmd->parsed()) {
            const Model model = load_model(eval_params);
            const EvalReport report = evaluate_directories(model, eval_clean, eval_corrupted, score_threshold, jobs);
            write_text(eval_out, to_json(report).dump(2) + "\n");
            write_text(csv_path_for(eval_out), performance_csv(report));
            std::printf("clean mAP %.4f  mPC %.4f\n", report.clean_map, report.mpc);
        } else if (featcorr_cmd->parsed()) {
            const Model model = load_model(fc_params);
            const auto a = features_by_class(model, load_dataset(fc_a, jobs));
            const auto b = features_by_class(model, load_dataset(fc_b, jobs));
            std::vector<std::string> labels = model.classes;
            labels.emplace_back("background");
            write_text(fc_out, matrix_csv(feature_correlation(a, b), labels));
        } else if (gradcheck_cmd->parsed()) {
            const GradcheckReport r = run_gradcheck(gc_seed, gc_trials, gc_joint);
            std::printf("contrastive max_rel_error %.3e (tol %.0e)\n", r.contrastive, GradcheckReport::kLossTolerance);
            std::printf("consistency max_rel_error %.3e (tol %.0e)\n", r.consistency, GradcheckReport::kLossTolerance);
            if (gc_joint > 0) std::printf("joint max_rel_error %.3e (tol %.0e)\n", r.joint, GradcheckReport::kJointTolerance);
            if (!r.passed()) {
                std::printf("FAIL\n");
                return 1;
            }
            std::printf("PASS\n");
        } else if (repro_cmd->parsed()) {
            const RunConfig c = repro_cfg.load();
            const ReproSummary s = run_repro(c, repro_out, jobs, [](const std::string& msg) { std::cerr << msg << '\n'; });
            for (const auto& r : s.seeds) {
                std::printf("seed %llu  baseline clean %.4f mPC %.4f | oadg clean %.4f mPC %.4f\n",
                            static_cast<unsigned long long>(r.seed), r.baseline.clean_map, r.baseline.mpc,
                            r.oadg.clean_map, r.oadg.mpc);
            }
            std::printf("mean mPC gain %+.4f (gate %s), mean clean delta %+.4f (gate %s)\n", s.mean_mpc_gain,
                        s.robustness_gate ? "pass" : "FAIL", s.mean_clean_delta, s.clean_gate ? "pass" : "FAIL");
            if (!s.passed()) return kExitGate;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code_for(e.code());
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitIo;
    }
    return 0;
}
