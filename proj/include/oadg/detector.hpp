#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "oadg/dataset.hpp"
#include "oadg/features.hpp"
#include "oadg/metrics.hpp"
#include "oadg/oaloss.hpp"
#include "oadg/oamix.hpp"
#include "oadg/rng.hpp"

namespace oadg {

/// Classifier MLP in -> hidden -> K+1 (last logit is background) plus the
/// contrastive head that reads the classifier's hidden layer.
struct DetectorParams {
    Eigen::MatrixXd w1;  // hidden x in
    Eigen::VectorXd b1;
    Eigen::MatrixXd w2;  // (K+1) x hidden
    Eigen::VectorXd b2;
    ContrastiveHead head;

    int input_dim() const { return static_cast<int>(w1.cols()); }
    int hidden_dim() const { return static_cast<int>(w1.rows()); }
    int num_outputs() const { return static_cast<int>(w2.rows()); }

    static DetectorParams zeros(int in, int hidden, int outputs, int head_hidden, int head_out);
    static DetectorParams random(int in, int hidden, int outputs, int head_hidden, int head_out, Rng& rng);
};

std::vector<double> flatten(const DetectorParams& params);
/// Inverse of flatten; `shape` supplies the dims.
DetectorParams unflatten(std::span<const double> values, const DetectorParams& shape);

struct Model {
    std::vector<std::string> classes;
    FeatureExtractor features;
    DetectorParams params;

    int num_classes() const { return static_cast<int>(classes.size()); }
};

nlohmann::json to_json(const Model& model);
Model model_from_json(const nlohmann::json& j);
void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

struct ForwardResult {
    Eigen::MatrixXd pre_hidden;   // N x hidden
    Eigen::MatrixXd hidden;       // N x hidden, the penultimate features
    Eigen::MatrixXd logits;       // N x (K+1)
    Eigen::MatrixXd contrastive;  // N x head_out, empty unless requested
};

/// Rows of `features` are cells. Throws DimMismatch.
ForwardResult forward(const DetectorParams& params, const Eigen::MatrixXd& features, bool with_contrastive = true);

/// Per-cell labels from box coverage of each grid cell. A cell is Foreground
/// when the box covering the largest fraction of its area covers at least
/// `threshold` of it; ties go to the smaller box, then the lower class id.
std::vector<InstanceLabel> assign_labels(int image_size, int grid, const std::vector<Annotation>& annotations,
                                         double threshold = 0.5);

/// Cells (row-major grid index) covered at least `threshold` by `rect`; the
/// cell holding the rect center when none qualifies.
std::vector<int> cells_covered(int image_size, int grid, const BBox& rect, double threshold = 0.5);

/// One view of a batch: cells of every image stacked in image order.
struct ViewBatch {
    Eigen::MatrixXd features;
    std::vector<InstanceLabel> labels;
    int cells_per_image = 64;

    int num_images() const { return cells_per_image > 0 ? static_cast<int>(labels.size()) / cells_per_image : 0; }
};

ViewBatch concat(const ViewBatch& a, const ViewBatch& b);

struct LossBreakdown {
    double det = 0.0;
    double cs = 0.0;
    double ct = 0.0;
    double oa = 0.0;
    double total = 0.0;
};

/// One Z entry: mean of the listed hidden rows. Rows index the stacked
/// [original; augmented] matrix.
struct ContrastiveEntry {
    std::vector<int> rows;
    InstanceLabel label;
};

struct ContrastiveGroup {
    std::vector<ContrastiveEntry> entries;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
};

struct ContrastivePlan {
    std::vector<ContrastiveGroup> groups;
};

struct TrainConfig {
    int epochs = 30;
    double lr = 0.05;
    double momentum = 0.9;
    int batch_size = 32;
    int hidden = 64;
    int lifted_dim = 64;
    int head_hidden = 32;
    int head_out = 16;
    double label_threshold = 0.5;
    double bg_ratio = 3.0;
    /// Images whose instances share one contrastive set Z.
    int contrastive_group = 4;
    double score_threshold = 0.3;
    OamixConfig oamix;
};

/// Builds Z for every contrastive group: all foreground cells of both views,
/// background cells subsampled to bg_ratio per foreground cell, and pooled
/// features of the mixing regions (Foreground regions with their class,
/// RandomBox regions mostly free of objects as background). Every entry is
/// paired with its counterpart in the other view.
ContrastivePlan build_contrastive_plan(const ViewBatch& original, const std::vector<MixPlan>& plans,
                                       const std::vector<std::vector<Annotation>>& annotations, int image_size,
                                       const TrainConfig& config, Rng& rng);

/// Cross-entropy over every row of `batch`. `grad` receives dL/dparams.
LossBreakdown evaluate_detection(const DetectorParams& params, const ViewBatch& batch, DetectorParams* grad);

/// L_det over both views, L_cs over same-index cell pairs, L_ct over the
/// plan, composed as L_det + lambda (L_cs + gamma L_ct). Groups may be
/// evaluated concurrently; their gradients are summed in group order.
LossBreakdown evaluate_joint(const DetectorParams& params, const ViewBatch& original, const ViewBatch& augmented,
                             const ContrastivePlan& plan, const Hyper& hyper, DetectorParams* grad, int jobs = 1);

struct TrainState {
    DetectorParams params;
    DetectorParams velocity;

    explicit TrainState(DetectorParams p);
};

void sgd_update(TrainState& state, const DetectorParams& grad, double lr, double momentum);

/// Plain cross-entropy SGD step.
LossBreakdown baseline_step(TrainState& state, const ViewBatch& batch, const TrainConfig& config);

/// Joint-objective SGD step. The views must describe the same images in the
/// same order (PairingMismatch otherwise).
LossBreakdown train_step(TrainState& state, const ViewBatch& original, const ViewBatch& augmented,
                         const std::vector<MixPlan>& plans, const std::vector<std::vector<Annotation>>& annotations,
                         int image_size, const Hyper& hyper, Rng& rng, const TrainConfig& config, int jobs = 1);

enum class TrainMode { Baseline, Oadg };

struct EpochLog {
    int epoch = 0;
    LossBreakdown loss;
    double clean_map = 0.0;
};

struct StepRecord {
    const TrainState& before;
    const TrainState& after;
    const ViewBatch& original;
    const ViewBatch* augmented;  // null in baseline mode
};

struct TrainResult {
    Model model;
    std::vector<EpochLog> log;
};

/// Full training run. Mini-batch order, mixing streams and background
/// subsampling derive from `seed`, so runs are reproducible for any `jobs`.
TrainResult train(const Dataset& train_set, const Dataset& val_set, const TrainConfig& config, const Hyper& hyper,
                  TrainMode mode, std::uint64_t seed, int jobs = 1,
                  const std::function<void(const StepRecord&)>& on_step = {});

std::string log_csv(const std::vector<EpochLog>& log);

/// Per-cell argmax; foreground cells above the threshold are grouped by
/// 4-connectivity per class, each group yielding its union box and the mean
/// class probability as score.
std::vector<Detection> detect(const Model& model, const ImageBuffer& image, double score_threshold = 0.3);
std::vector<Detection> detections_from_probabilities(const Eigen::MatrixXd& probabilities, int grid, int image_size,
                                                     double score_threshold);

double evaluate_dataset_map(const Model& model, const Dataset& dataset, double score_threshold = 0.3, int jobs = 1);

}  // namespace oadg
