#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "oadg/image.hpp"

namespace oadg {

double iou(const BBox& a, const BBox& b);

struct ScoredBox {
    int image = 0;
    BBox box;
    double score = 0.0;
};

struct GroundTruthBox {
    int image = 0;
    BBox box;
};

/// Single-class AP with all-point interpolation. Detections are visited by
/// descending score (ties keep input order); each one claims the unmatched
/// ground truth of its image with the highest IoU, if that IoU reaches the
/// threshold. Returns 0 when there are no ground truths.
double average_precision(const std::vector<ScoredBox>& detections, const std::vector<GroundTruthBox>& ground_truths,
                         double iou_threshold = 0.5);

/// Unweighted mean over classes that have an AP (classes with ground truth).
/// Throws InvalidArgument when no class has one.
double mean_ap(const std::vector<std::optional<double>>& per_class_ap);

struct Detection {
    BBox box;
    int class_id = 0;
    double score = 0.0;
};

struct ClassLabelledBox {
    BBox box;
    int class_id = 0;
};

struct MapResult {
    double map = 0.0;
    std::vector<std::optional<double>> per_class;
};

/// Dataset-level mAP; detections[i] and ground_truths[i] describe image i.
MapResult evaluate_map(const std::vector<std::vector<Detection>>& detections,
                       const std::vector<std::vector<ClassLabelledBox>>& ground_truths, int num_classes,
                       double iou_threshold = 0.5);

/// Mean performance under corruption: average over kinds of the average over
/// severities. Throws IncompleteMatrix for ragged rows or non-finite cells.
double mpc(const std::vector<std::vector<double>>& performance);

struct EvalReport {
    std::vector<std::string> corruptions;
    std::vector<int> severities;
    std::vector<std::vector<double>> performance;  // [corruption][severity] mAP
    double clean_map = 0.0;
    double mpc = 0.0;

    int num_corruptions() const { return static_cast<int>(corruptions.size()); }
    int num_severities() const { return static_cast<int>(severities.size()); }
};

nlohmann::json to_json(const EvalReport& report);
std::string performance_csv(const EvalReport& report);

/// Entry (c, c') is the mean cosine similarity between class-c vectors of
/// domain A and class-c' vectors of domain B (rows of the matrices); each row
/// is then divided by its largest entry. Zero vectors contribute similarity 0.
/// Throws EmptyClass when a class has no vectors in either domain.
Eigen::MatrixXd feature_correlation(const std::vector<Eigen::MatrixXd>& domain_a,
                                    const std::vector<Eigen::MatrixXd>& domain_b);

}  // namespace oadg
