#include "oadg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "oadg/error.hpp"

namespace oadg {

double iou(const BBox& a, const BBox& b) {
    const long ix = std::max(0, std::min(a.right(), b.right()) - std::max(a.x, b.x));
    const long iy = std::max(0, std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y));
    const long inter = ix * iy;
    const long uni = a.area() + b.area() - inter;
    return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

double average_precision(const std::vector<ScoredBox>& detections, const std::vector<GroundTruthBox>& ground_truths,
                         double iou_threshold) {
    if (ground_truths.empty()) return 0.0;
    std::vector<std::size_t> order(detections.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return detections[a].score > detections[b].score; });

    std::vector<char> matched(ground_truths.size(), 0);
    std::vector<char> hit(order.size(), 0);
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        const ScoredBox& det = detections[order[rank]];
        double best = -1.0;
        std::size_t best_gt = 0;
        for (std::size_t g = 0; g < ground_truths.size(); ++g) {
            if (matched[g] || ground_truths[g].image != det.image) continue;
            const double o = iou(det.box, ground_truths[g].box);
            if (o > best) {
                best = o;
                best_gt = g;
            }
        }
        if (best >= iou_threshold) {
            matched[best_gt] = 1;
            hit[rank] = 1;
        }
    }

    // Precision envelope from the right, then sum it at every recall step.
    std::vector<double> precision(order.size());
    std::size_t tp = 0;
    for (std::size_t r = 0; r < order.size(); ++r) {
        tp += hit[r];
        precision[r] = static_cast<double>(tp) / static_cast<double>(r + 1);
    }
    for (std::size_t r = order.size(); r-- > 1;) precision[r - 1] = std::max(precision[r - 1], precision[r]);
    double ap = 0.0;
    const double step = 1.0 / static_cast<double>(ground_truths.size());
    for (std::size_t r = 0; r < order.size(); ++r) {
        if (hit[r]) ap += step * precision[r];
    }
    return ap;
}

double mean_ap(const std::vector<std::optional<double>>& per_class_ap) {
    double sum = 0.0;
    int count = 0;
    for (const auto& ap : per_class_ap) {
        if (!ap) continue;
        sum += *ap;
        ++count;
    }
    if (count == 0) throw Error(ErrorCode::InvalidArgument, "no class has ground truth");
    return sum / count;
}

MapResult evaluate_map(const std::vector<std::vector<Detection>>& detections,
                       const std::vector<std::vector<ClassLabelledBox>>& ground_truths, int num_classes,
                       double iou_threshold) {
    if (detections.size() != ground_truths.size()) throw Error(ErrorCode::DimMismatch, "detections/ground truth image count");
    std::vector<std::vector<ScoredBox>> dets(static_cast<std::size_t>(num_classes));
    std::vector<std::vector<GroundTruthBox>> gts(static_cast<std::size_t>(num_classes));
    for (std::size_t i = 0; i < detections.size(); ++i) {
        for (const auto& d : detections[i]) {
            if (d.class_id >= 0 && d.class_id < num_classes) dets[static_cast<std::size_t>(d.class_id)].push_back({static_cast<int>(i), d.box, d.score});
        }
        for (const auto& g : ground_truths[i]) {
            if (g.class_id >= 0 && g.class_id < num_classes) gts[static_cast<std::size_t>(g.class_id)].push_back({static_cast<int>(i), g.box});
        }
    }
    MapResult result;
    result.per_class.resize(static_cast<std::size_t>(num_classes));
    for (std::size_t c = 0; c < result.per_class.size(); ++c) {
        if (!gts[c].empty()) result.per_class[c] = average_precision(dets[c], gts[c], iou_threshold);
    }
    result.map = mean_ap(result.per_class);
    return result;
}

double mpc(const std::vector<std::vector<double>>& performance) {
    if (performance.empty() || performance.front().empty()) throw Error(ErrorCode::IncompleteMatrix, "empty matrix");
    const std::size_t severities = performance.front().size();
    double outer = 0.0;
    for (const auto& row : performance) {
        if (row.size() != severities) throw Error(ErrorCode::IncompleteMatrix, "ragged performance matrix");
        double inner = 0.0;
        for (double v : row) {
            if (!std::isfinite(v)) throw Error(ErrorCode::IncompleteMatrix, "missing cell");
            inner += v;
        }
        outer += inner / static_cast<double>(severities);
    }
    return outer / static_cast<double>(performance.size());
}

nlohmann::json to_json(const EvalReport& report) {
    return {{"corruptions", report.corruptions},
            {"severities", report.severities},
            {"P", report.performance},
            {"N_C", report.num_corruptions()},
            {"N_S", report.num_severities()},
            {"clean_mAP", report.clean_map},
            {"mPC", report.mpc}};
}

std::string performance_csv(const EvalReport& report) {
    std::ostringstream out;
    out.precision(17);
    out << "corruption";
    for (int s : report.severities) out << ",s" << s;
    out << '\n';
    for (std::size_t c = 0; c < report.performance.size(); ++c) {
        out << report.corruptions[c];
        for (double v : report.performance[c]) out << ',' << v;
        out << '\n';
    }
    return out.str();
}

Eigen::MatrixXd feature_correlation(const std::vector<Eigen::MatrixXd>& domain_a,
                                    const std::vector<Eigen::MatrixXd>& domain_b) {
    if (domain_a.size() != domain_b.size()) throw Error(ErrorCode::DimMismatch, "domains have different class counts");
    const auto classes = static_cast<Eigen::Index>(domain_a.size());
    auto unit_rows = [](const Eigen::MatrixXd& m) {
        Eigen::MatrixXd u = m;
        for (Eigen::Index r = 0; r < u.rows(); ++r) {
            const double n = u.row(r).norm();
            if (n > 0.0) u.row(r) /= n;
            else u.row(r).setZero();
        }
        return u;
    };
    std::vector<Eigen::MatrixXd> ua, ub;
    for (Eigen::Index c = 0; c < classes; ++c) {
        if (domain_a[c].rows() == 0 || domain_b[c].rows() == 0) {
            throw Error(ErrorCode::EmptyClass, "class " + std::to_string(c) + " has no features");
        }
        ua.push_back(unit_rows(domain_a[c]));
        ub.push_back(unit_rows(domain_b[c]));
    }
    Eigen::MatrixXd corr(classes, classes);
    for (Eigen::Index c = 0; c < classes; ++c) {
        for (Eigen::Index d = 0; d < classes; ++d) {
            corr(c, d) = (ua[c] * ub[d].transpose()).mean();
        }
        const double mx = corr.row(c).maxCoeff();
        const double scale = mx > 0.0 ? mx : corr.row(c).cwiseAbs().maxCoeff();
        if (scale > 0.0) corr.row(c) /= scale;
    }
    return corr;
}

}  // namespace oadg
