#include "oadg/detector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "oadg/error.hpp"
#include "oadg/parallel.hpp"

namespace oadg {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// ---------------------------------------------------------------------------
// parameters

DetectorParams DetectorParams::zeros(int in, int hidden, int outputs, int head_hidden, int head_out) {
    return {MatrixXd::Zero(hidden, in), VectorXd::Zero(hidden), MatrixXd::Zero(outputs, hidden),
            VectorXd::Zero(outputs), ContrastiveHead::zeros(hidden, head_hidden, head_out)};
}

DetectorParams DetectorParams::random(int in, int hidden, int outputs, int head_hidden, int head_out, Rng& rng) {
    DetectorParams p = zeros(in, hidden, outputs, head_hidden, head_out);
    const double l1 = std::sqrt(6.0 / in);
    for (Index r = 0; r < p.w1.rows(); ++r)
        for (Index c = 0; c < p.w1.cols(); ++c) p.w1(r, c) = uniform_real(rng, -l1, l1);
    const double l2 = std::sqrt(6.0 / (hidden + outputs));
    for (Index r = 0; r < p.w2.rows(); ++r)
        for (Index c = 0; c < p.w2.cols(); ++c) p.w2(r, c) = uniform_real(rng, -l2, l2);
    p.head = ContrastiveHead::random(hidden, head_hidden, head_out, rng);
    return p;
}

namespace {

// Visits every parameter block of `a` together with the matching blocks of `rest`.
template <typename Fn, typename... Rest>
void for_each_block(Fn&& fn, DetectorParams& a, Rest&... rest) {
    fn(a.w1, rest.w1...);
    fn(a.b1, rest.b1...);
    fn(a.w2, rest.w2...);
    fn(a.b2, rest.b2...);
    fn(a.head.w1, rest.head.w1...);
    fn(a.head.b1, rest.head.b1...);
    fn(a.head.w2, rest.head.w2...);
    fn(a.head.b2, rest.head.b2...);
}

template <typename Fn>
void for_each_block_const(Fn&& fn, const DetectorParams& a) {
    fn(a.w1);
    fn(a.b1);
    fn(a.w2);
    fn(a.b2);
    fn(a.head.w1);
    fn(a.head.b1);
    fn(a.head.w2);
    fn(a.head.b2);
}

template <typename Derived>
void append_rows(std::vector<double>& out, const Eigen::MatrixBase<Derived>& m) {
    for (Index r = 0; r < m.rows(); ++r)
        for (Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
}

}  // namespace

std::vector<double> flatten(const DetectorParams& params) {
    std::vector<double> out;
    for_each_block_const([&](const auto& m) { append_rows(out, m); }, params);
    return out;
}

DetectorParams unflatten(std::span<const double> values, const DetectorParams& shape) {
    DetectorParams p = shape;
    std::size_t pos = 0;
    for_each_block(
        [&](auto& m) {
            for (Index r = 0; r < m.rows(); ++r) {
                for (Index c = 0; c < m.cols(); ++c) {
                    if (pos >= values.size()) throw Error(ErrorCode::DimMismatch, "too few parameter values");
                    m(r, c) = values[pos++];
                }
            }
        },
        p);
    if (pos != values.size()) throw Error(ErrorCode::DimMismatch, "too many parameter values");
    return p;
}

// ---------------------------------------------------------------------------
// serialization

namespace {

nlohmann::json matrix_json(const MatrixXd& m) {
    std::vector<double> flat;
    append_rows(flat, m);
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", flat}};
}

MatrixXd matrix_from_json(const nlohmann::json& j) {
    const auto rows = j.at("rows").get<Index>();
    const auto cols = j.at("cols").get<Index>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (static_cast<Index>(data.size()) != rows * cols) throw Error(ErrorCode::DimMismatch, "matrix data size");
    MatrixXd m(rows, cols);
    for (Index r = 0; r < rows; ++r)
        for (Index c = 0; c < cols; ++c) m(r, c) = data[static_cast<std::size_t>(r * cols + c)];
    return m;
}

VectorXd vector_from_json(const nlohmann::json& j) {
    const MatrixXd m = matrix_from_json(j);
    if (m.cols() != 1) throw Error(ErrorCode::DimMismatch, "expected a column vector");
    return m.col(0);
}

}  // namespace

nlohmann::json to_json(const Model& model) {
    const DetectorParams& p = model.params;
    return {{"dims",
             {{"input", p.input_dim()},
              {"hidden", p.hidden_dim()},
              {"outputs", p.num_outputs()},
              {"head_hidden", p.head.w1.rows()},
              {"head_out", p.head.w2.rows()}}},
            {"classes", model.classes},
            {"features", to_json(model.features)},
            {"w1", matrix_json(p.w1)},
            {"b1", matrix_json(p.b1)},
            {"w2", matrix_json(p.w2)},
            {"b2", matrix_json(p.b2)},
            {"head_w1", matrix_json(p.head.w1)},
            {"head_b1", matrix_json(p.head.b1)},
            {"head_w2", matrix_json(p.head.w2)},
            {"head_b2", matrix_json(p.head.b2)}};
}

Model model_from_json(const nlohmann::json& j) {
    try {
        Model m;
        m.classes = j.at("classes").get<std::vector<std::string>>();
        m.features = feature_extractor_from_json(j.at("features"));
        DetectorParams& p = m.params;
        p.w1 = matrix_from_json(j.at("w1"));
        p.b1 = vector_from_json(j.at("b1"));
        p.w2 = matrix_from_json(j.at("w2"));
        p.b2 = vector_from_json(j.at("b2"));
        p.head.w1 = matrix_from_json(j.at("head_w1"));
        p.head.b1 = vector_from_json(j.at("head_b1"));
        p.head.w2 = matrix_from_json(j.at("head_w2"));
        p.head.b2 = vector_from_json(j.at("head_b2"));
        const auto& dims = j.at("dims");
        if (dims.at("input").get<int>() != p.input_dim() || dims.at("hidden").get<int>() != p.hidden_dim() ||
            dims.at("outputs").get<int>() != p.num_outputs() || p.num_outputs() != m.num_classes() + 1 ||
            p.input_dim() != m.features.lifted_dim()) {
            throw Error(ErrorCode::DimMismatch, "params.json dims header disagrees with the arrays");
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::MalformedJson, std::string("params: ") + e.what());
    }
}

void save_model(const Model& model, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out << to_json(model).dump() << '\n';
}

Model load_model(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw Error(ErrorCode::MissingFile, path.string());
    std::ifstream in(path);
    try {
        return model_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::MalformedJson, path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// forward / labels

ForwardResult forward(const DetectorParams& params, const MatrixXd& features, bool with_contrastive) {
    if (features.cols() != params.input_dim() || params.w2.cols() != params.hidden_dim()) {
        throw Error(ErrorCode::DimMismatch, "features do not match the detector input size");
    }
    ForwardResult r;
    r.pre_hidden = (features * params.w1.transpose()).rowwise() + params.b1.transpose();
    r.hidden = r.pre_hidden.cwiseMax(0.0);
    r.logits = (r.hidden * params.w2.transpose()).rowwise() + params.b2.transpose();
    if (with_contrastive) r.contrastive = project_contrastive_batch(r.hidden, params.head).output;
    return r;
}

namespace {

double cell_coverage(const BBox& box, int cx, int cy, int cell) {
    const int ix = std::max(0, std::min(box.right(), (cx + 1) * cell) - std::max(box.x, cx * cell));
    const int iy = std::max(0, std::min(box.bottom(), (cy + 1) * cell) - std::max(box.y, cy * cell));
    return static_cast<double>(ix) * iy / (static_cast<double>(cell) * cell);
}

}  // namespace

std::vector<InstanceLabel> assign_labels(int image_size, int grid, const std::vector<Annotation>& annotations,
                                         double threshold) {
    const int cell = image_size / grid;
    std::vector<InstanceLabel> labels(static_cast<std::size_t>(grid) * grid, InstanceLabel::bg());
    for (int cy = 0; cy < grid; ++cy) {
        for (int cx = 0; cx < grid; ++cx) {
            const Annotation* best = nullptr;
            double best_cov = 0.0;
            for (const auto& a : annotations) {
                const double cov = cell_coverage(a.bbox, cx, cy, cell);
                if (cov <= 0.0) continue;
                const bool better = best == nullptr || cov > best_cov ||
                                    (cov == best_cov && (a.bbox.area() < best->bbox.area() ||
                                                         (a.bbox.area() == best->bbox.area() && a.class_id < best->class_id)));
                if (better) {
                    best = &a;
                    best_cov = cov;
                }
            }
            if (best != nullptr && best_cov >= threshold) {
                labels[static_cast<std::size_t>(cy) * grid + cx] = InstanceLabel::foreground(best->class_id);
            }
        }
    }
    return labels;
}

std::vector<int> cells_covered(int image_size, int grid, const BBox& rect, double threshold) {
    const int cell = image_size / grid;
    std::vector<int> cells;
    for (int cy = 0; cy < grid; ++cy)
        for (int cx = 0; cx < grid; ++cx)
            if (cell_coverage(rect, cx, cy, cell) >= threshold) cells.push_back(cy * grid + cx);
    if (cells.empty()) {
        const int cx = std::clamp((rect.x + rect.w / 2) / cell, 0, grid - 1);
        const int cy = std::clamp((rect.y + rect.h / 2) / cell, 0, grid - 1);
        cells.push_back(cy * grid + cx);
    }
    return cells;
}

ViewBatch concat(const ViewBatch& a, const ViewBatch& b) {
    if (a.features.cols() != b.features.cols() || a.cells_per_image != b.cells_per_image) {
        throw Error(ErrorCode::DimMismatch, "cannot concatenate view batches");
    }
    ViewBatch out;
    out.cells_per_image = a.cells_per_image;
    out.features.resize(a.features.rows() + b.features.rows(), a.features.cols());
    out.features << a.features, b.features;
    out.labels = a.labels;
    out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
    return out;
}

// ---------------------------------------------------------------------------
// losses

namespace {

constexpr double kMinProjectionNorm = 1e-9;

int target_index(const InstanceLabel& label, int outputs) { return label.background ? outputs - 1 : label.class_id; }

MatrixXd row_softmax(const MatrixXd& logits) {
    MatrixXd p(logits.rows(), logits.cols());
    for (Index r = 0; r < logits.rows(); ++r) p.row(r) = softmax(logits.row(r).transpose()).transpose();
    return p;
}

struct DetectionTerms {
    ForwardResult fwd;
    MatrixXd probs;
    double loss = 0.0;
    MatrixXd grad_logits;
};

DetectionTerms detection_terms(const DetectorParams& params, const ViewBatch& batch) {
    if (static_cast<Index>(batch.labels.size()) != batch.features.rows()) {
        throw Error(ErrorCode::DimMismatch, "labels and feature rows differ");
    }
    DetectionTerms t;
    t.fwd = forward(params, batch.features, false);
    t.probs = row_softmax(t.fwd.logits);
    const Index n = t.probs.rows();
    const int outputs = params.num_outputs();
    t.grad_logits = t.probs / static_cast<double>(n);
    double loss = 0.0;
    for (Index r = 0; r < n; ++r) {
        const int target = target_index(batch.labels[static_cast<std::size_t>(r)], outputs);
        const double lse = [&] {
            const double mx = t.fwd.logits.row(r).maxCoeff();
            return mx + std::log((t.fwd.logits.row(r).array() - mx).exp().sum());
        }();
        loss += lse - t.fwd.logits(r, target);
        t.grad_logits(r, target) -= 1.0 / static_cast<double>(n);
    }
    t.loss = loss / static_cast<double>(n);
    return t;
}

// Backprop through the classifier given logits and extra hidden-layer gradients.
void classifier_backward(const DetectorParams& params, const ViewBatch& batch, const ForwardResult& fwd,
                         const MatrixXd& grad_logits, const MatrixXd* extra_hidden, DetectorParams& grad) {
    grad.w2 = grad_logits.transpose() * fwd.hidden;
    grad.b2 = grad_logits.colwise().sum().transpose();
    MatrixXd grad_hidden = grad_logits * params.w2;
    if (extra_hidden != nullptr) grad_hidden += *extra_hidden;
    grad_hidden = (fwd.pre_hidden.array() > 0.0).select(grad_hidden, 0.0);
    grad.w1 = grad_hidden.transpose() * batch.features;
    grad.b1 = grad_hidden.colwise().sum().transpose();
}

struct GroupTerm {
    bool evaluated = false;
    double value = 0.0;
    HeadGrad grad;
};

// Contrastive loss of one group of pooled hidden features.
GroupTerm group_term(const ContrastiveGroup& group, const MatrixXd& hidden, const ContrastiveHead& head, double tau,
                     bool with_grad) {
    GroupTerm term;
    if (group.entries.size() < 2) return term;
    MatrixXd pooled(static_cast<Index>(group.entries.size()), hidden.cols());
    for (std::size_t e = 0; e < group.entries.size(); ++e) {
        const auto& rows = group.entries[e].rows;
        pooled.row(static_cast<Index>(e)).setZero();
        for (int row : rows) pooled.row(static_cast<Index>(e)) += hidden.row(row);
        pooled.row(static_cast<Index>(e)) /= static_cast<double>(rows.size());
    }
    const HeadForward hf = project_contrastive_batch(pooled, head);

    // Entries whose projection vanishes have no direction; they leave Z
    // together with their counterpart.
    std::vector<char> keep(group.entries.size(), 1);
    for (std::size_t e = 0; e < group.entries.size(); ++e) {
        if (hf.output.row(static_cast<Index>(e)).norm() < kMinProjectionNorm) keep[e] = 0;
    }
    for (const auto& [a, b] : group.pairs) {
        if (!keep[a] || !keep[b]) keep[a] = keep[b] = 0;
    }
    std::vector<Index> kept;
    std::vector<std::size_t> new_index(group.entries.size(), 0);
    for (std::size_t e = 0; e < group.entries.size(); ++e) {
        if (keep[e]) {
            new_index[e] = kept.size();
            kept.push_back(static_cast<Index>(e));
        }
    }
    if (kept.size() < 2) return term;

    ContrastiveBatch batch;
    batch.features.resize(static_cast<Index>(kept.size()), hf.output.cols());
    for (std::size_t k = 0; k < kept.size(); ++k) {
        batch.features.row(static_cast<Index>(k)) = hf.output.row(kept[k]);
        batch.labels.push_back(group.entries[static_cast<std::size_t>(kept[k])].label);
    }
    batch.tau = tau;
    for (const auto& [a, b] : group.pairs) {
        if (keep[a]) batch.pairs.emplace_back(new_index[a], new_index[b]);
    }
    const LossValueWithGrad loss = contrastive_loss(batch);
    term.evaluated = true;
    term.value = loss.value;
    if (with_grad) {
        MatrixXd grad_output = MatrixXd::Zero(hf.output.rows(), hf.output.cols());
        for (std::size_t k = 0; k < kept.size(); ++k) grad_output.row(kept[k]) = loss.grad.row(static_cast<Index>(k));
        term.grad = project_contrastive_backward(pooled, head, hf, grad_output);
    }
    return term;
}

}  // namespace

LossBreakdown evaluate_detection(const DetectorParams& params, const ViewBatch& batch, DetectorParams* grad) {
    const DetectionTerms t = detection_terms(params, batch);
    LossBreakdown out;
    out.det = t.loss;
    out.total = t.loss;
    if (grad != nullptr) {
        *grad = DetectorParams::zeros(params.input_dim(), params.hidden_dim(), params.num_outputs(),
                                      static_cast<int>(params.head.w1.rows()), static_cast<int>(params.head.w2.rows()));
        classifier_backward(params, batch, t.fwd, t.grad_logits, nullptr, *grad);
    }
    return out;
}

LossBreakdown evaluate_joint(const DetectorParams& params, const ViewBatch& original, const ViewBatch& augmented,
                             const ContrastivePlan& plan, const Hyper& hyper, DetectorParams* grad, int jobs) {
    if (original.features.rows() != augmented.features.rows() || original.labels != augmented.labels) {
        throw Error(ErrorCode::PairingMismatch, "original and augmented views do not describe the same cells");
    }
    const ViewBatch both = concat(original, augmented);
    const DetectionTerms det = detection_terms(params, both);
    const Index n = original.features.rows();
    const Index outputs = params.num_outputs();

    // Consistency between same-index cells of the two views.
    MatrixXd grad_logits_cs = MatrixXd::Zero(2 * n, outputs);
    double cs = 0.0;
    for (Index r = 0; r < n; ++r) {
        const VectorXd p = det.probs.row(r).transpose();
        const VectorXd q = det.probs.row(n + r).transpose();
        const LossValueWithGrad js = js_consistency(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())),
                                                    std::span<const double>(q.data(), static_cast<std::size_t>(q.size())));
        cs += js.value;
        grad_logits_cs.row(r) = js.grad.row(0) / static_cast<double>(n);
        grad_logits_cs.row(n + r) = js.grad.row(1) / static_cast<double>(n);
    }
    cs /= static_cast<double>(n);

    // Contrastive term over pooled hidden features.
    const MatrixXd& hidden = det.fwd.hidden;
    MatrixXd grad_hidden_ct = MatrixXd::Zero(hidden.rows(), hidden.cols());
    ContrastiveHead head_grad = ContrastiveHead::zeros(params.hidden_dim(), static_cast<int>(params.head.w1.rows()),
                                                       static_cast<int>(params.head.w2.rows()));
    std::vector<GroupTerm> terms(plan.groups.size());
    parallel_for(plan.groups.size(), jobs, [&](std::size_t g) {
        terms[g] = group_term(plan.groups[g], hidden, params.head, hyper.tau, grad != nullptr);
    });
    double ct = 0.0;
    int evaluated = 0;
    for (const auto& t : terms) {
        if (!t.evaluated) continue;
        ct += t.value;
        ++evaluated;
    }
    if (evaluated > 0) ct /= evaluated;

    LossBreakdown out;
    out.det = det.loss;
    out.cs = cs;
    out.ct = ct;
    out.oa = oa_loss(cs, ct, hyper.gamma);
    out.total = joint_loss(det.loss, out.oa, hyper.lambda);

    if (grad != nullptr) {
        const double ct_scale = hyper.lambda * hyper.gamma / std::max(evaluated, 1);
        for (std::size_t g = 0; g < terms.size(); ++g) {
            if (!terms[g].evaluated) continue;
            const HeadGrad& hg = terms[g].grad;
            head_grad.w1 += hg.params.w1;
            head_grad.b1 += hg.params.b1;
            head_grad.w2 += hg.params.w2;
            head_grad.b2 += hg.params.b2;
            const auto& entries = plan.groups[g].entries;
            for (std::size_t e = 0; e < entries.size(); ++e) {
                const double share = 1.0 / static_cast<double>(entries[e].rows.size());
                for (int row : entries[e].rows) grad_hidden_ct.row(row) += share * hg.input.row(static_cast<Index>(e));
            }
        }
        grad_hidden_ct *= ct_scale;
        head_grad.w1 *= ct_scale;
        head_grad.b1 *= ct_scale;
        head_grad.w2 *= ct_scale;
        head_grad.b2 *= ct_scale;

        const MatrixXd grad_logits = det.grad_logits + hyper.lambda * grad_logits_cs;
        *grad = DetectorParams::zeros(params.input_dim(), params.hidden_dim(), params.num_outputs(),
                                      static_cast<int>(params.head.w1.rows()), static_cast<int>(params.head.w2.rows()));
        classifier_backward(params, both, det.fwd, grad_logits, &grad_hidden_ct, *grad);
        grad->head = std::move(head_grad);
    }
    return out;
}

// ---------------------------------------------------------------------------
// contrastive plan

ContrastivePlan build_contrastive_plan(const ViewBatch& original, const std::vector<MixPlan>& plans,
                                       const std::vector<std::vector<Annotation>>& annotations, int image_size,
                                       const TrainConfig& config, Rng& rng) {
    const int images = original.num_images();
    const int cells = original.cells_per_image;
    const int grid = static_cast<int>(std::lround(std::sqrt(static_cast<double>(cells))));
    if (static_cast<int>(plans.size()) != images || static_cast<int>(annotations.size()) != images) {
        throw Error(ErrorCode::PairingMismatch, "mix plans do not match the batch");
    }
    const int offset = static_cast<int>(original.features.rows());  // augmented rows start here
    const int group_size = std::max(1, config.contrastive_group);

    ContrastivePlan plan;
    for (int start = 0; start < images; start += group_size) {
        ContrastiveGroup group;
        auto add_pair = [&](std::vector<int> rows, InstanceLabel label) {
            std::vector<int> aug_rows = rows;
            for (int& r : aug_rows) r += offset;
            const std::size_t a = group.entries.size();
            group.entries.push_back({std::move(rows), label});
            group.entries.push_back({std::move(aug_rows), label});
            group.pairs.emplace_back(a, a + 1);
        };

        std::vector<int> background;
        int foreground = 0;
        const int end = std::min(images, start + group_size);
        for (int img = start; img < end; ++img) {
            for (int c = 0; c < cells; ++c) {
                const int row = img * cells + c;
                const InstanceLabel& label = original.labels[static_cast<std::size_t>(row)];
                if (label.background) {
                    background.push_back(row);
                } else {
                    add_pair({row}, label);
                    ++foreground;
                }
            }
        }
        // Partial Fisher-Yates for the background subsample, kept in draw order.
        const auto keep = std::min<std::size_t>(background.size(),
                                                static_cast<std::size_t>(std::floor(config.bg_ratio * foreground)));
        for (std::size_t i = 0; i < keep; ++i) {
            const auto j = static_cast<std::size_t>(uniform_int(rng, static_cast<int>(i), static_cast<int>(background.size()) - 1));
            std::swap(background[i], background[j]);
            add_pair({background[i]}, InstanceLabel::bg());
        }

        for (int img = start; img < end; ++img) {
            for (const Region& region : plans[static_cast<std::size_t>(img)].regions) {
                if (region.level == RegionLevel::Image) continue;
                InstanceLabel label = InstanceLabel::bg();
                if (region.level == RegionLevel::Foreground) {
                    label = InstanceLabel::foreground(region.class_id.value_or(0));
                } else {
                    double max_overlap = 0.0;
                    for (const auto& a : annotations[static_cast<std::size_t>(img)]) {
                        const int ix = std::max(0, std::min(a.bbox.right(), region.rect.right()) - std::max(a.bbox.x, region.rect.x));
                        const int iy = std::max(0, std::min(a.bbox.bottom(), region.rect.bottom()) - std::max(a.bbox.y, region.rect.y));
                        max_overlap = std::max(max_overlap, static_cast<double>(ix) * iy / static_cast<double>(region.rect.area()));
                    }
                    if (max_overlap >= config.label_threshold) continue;
                }
                std::vector<int> rows;
                for (int c : cells_covered(image_size, grid, region.rect, config.label_threshold)) rows.push_back(img * cells + c);
                add_pair(std::move(rows), label);
            }
        }
        plan.groups.push_back(std::move(group));
    }
    return plan;
}

// ---------------------------------------------------------------------------
// optimization

TrainState::TrainState(DetectorParams p)
    : params(std::move(p)),
      velocity(DetectorParams::zeros(params.input_dim(), params.hidden_dim(), params.num_outputs(),
                                     static_cast<int>(params.head.w1.rows()), static_cast<int>(params.head.w2.rows()))) {}

void sgd_update(TrainState& state, const DetectorParams& grad, double lr, double momentum) {
    DetectorParams g = grad;
    for_each_block(
        [&](auto& p, auto& v, auto& gb) {
            v = momentum * v + gb;
            p -= lr * v;
        },
        state.params, state.velocity, g);
}

LossBreakdown baseline_step(TrainState& state, const ViewBatch& batch, const TrainConfig& config) {
    DetectorParams grad;
    const LossBreakdown loss = evaluate_detection(state.params, batch, &grad);
    sgd_update(state, grad, config.lr, config.momentum);
    return loss;
}

LossBreakdown train_step(TrainState& state, const ViewBatch& original, const ViewBatch& augmented,
                         const std::vector<MixPlan>& plans, const std::vector<std::vector<Annotation>>& annotations,
                         int image_size, const Hyper& hyper, Rng& rng, const TrainConfig& config, int jobs) {
    if (original.labels != augmented.labels) throw Error(ErrorCode::PairingMismatch, "views carry different labels");
    const ContrastivePlan plan = build_contrastive_plan(original, plans, annotations, image_size, config, rng);
    DetectorParams grad;
    const LossBreakdown loss = evaluate_joint(state.params, original, augmented, plan, hyper, &grad, jobs);
    sgd_update(state, grad, config.lr, config.momentum);
    return loss;
}

// ---------------------------------------------------------------------------
// training loop

namespace {

constexpr std::uint64_t kInitTag = 11;
constexpr std::uint64_t kLiftTag = 12;
constexpr std::uint64_t kShuffleTag = 13;
constexpr std::uint64_t kMixTag = 14;
constexpr std::uint64_t kStepTag = 15;

ViewBatch gather(const std::vector<MatrixXd>& features, const std::vector<std::vector<InstanceLabel>>& labels,
                 const std::vector<std::size_t>& indices) {
    ViewBatch batch;
    const Index cells = features.front().rows();
    batch.cells_per_image = static_cast<int>(cells);
    batch.features.resize(cells * static_cast<Index>(indices.size()), features.front().cols());
    for (std::size_t k = 0; k < indices.size(); ++k) {
        batch.features.middleRows(static_cast<Index>(k) * cells, cells) = features[indices[k]];
        batch.labels.insert(batch.labels.end(), labels[indices[k]].begin(), labels[indices[k]].end());
    }
    return batch;
}

LossBreakdown& operator+=(LossBreakdown& a, const LossBreakdown& b) {
    a.det += b.det;
    a.cs += b.cs;
    a.ct += b.ct;
    a.oa += b.oa;
    a.total += b.total;
    return a;
}

}  // namespace

TrainResult train(const Dataset& train_set, const Dataset& val_set, const TrainConfig& config, const Hyper& hyper,
                  TrainMode mode, std::uint64_t seed, int jobs, const std::function<void(const StepRecord&)>& on_step) {
    if (train_set.samples.empty()) throw Error(ErrorCode::InvalidArgument, "empty training set");
    const int image_size = train_set.samples.front().image.width();
    const int grid = 8;
    if (image_size % grid != 0) throw Error(ErrorCode::DimMismatch, "image size must be divisible by the grid");

    TrainResult result;
    Model& model = result.model;
    model.classes = train_set.classes;
    std::vector<const ImageBuffer*> images;
    for (const auto& s : train_set.samples) images.push_back(&s.image);
    model.features = FeatureExtractor::fit(images, grid, config.lifted_dim, stream_seed(seed, kLiftTag));
    {
        Rng init = make_rng(stream_seed(seed, kInitTag));
        model.params = DetectorParams::random(config.lifted_dim, config.hidden, model.num_classes() + 1,
                                              config.head_hidden, config.head_out, init);
    }

    const std::size_t n = train_set.samples.size();
    std::vector<MatrixXd> clean_features(n);
    std::vector<std::vector<InstanceLabel>> labels(n);
    std::vector<SaliencyMap> saliency(mode == TrainMode::Oadg ? n : 0);
    parallel_for(n, jobs, [&](std::size_t i) {
        const auto& s = train_set.samples[i];
        clean_features[i] = model.features(s.image);
        labels[i] = assign_labels(image_size, grid, s.annotations, config.label_threshold);
        if (mode == TrainMode::Oadg) saliency[i] = spectral_residual_map(s.image, config.oamix.saliency);
    });

    TrainState state(model.params);
    std::vector<std::size_t> order(n);
    std::vector<MatrixXd> mixed_features(mode == TrainMode::Oadg ? n : 0);
    std::vector<MixPlan> mixed_plans(mode == TrainMode::Oadg ? n : 0);

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle = make_rng(stream_seed(seed, kShuffleTag, static_cast<std::uint64_t>(epoch)));
        for (std::size_t i = n; i > 1; --i) {
            std::swap(order[i - 1], order[static_cast<std::size_t>(uniform_int(shuffle, 0, static_cast<int>(i) - 1))]);
        }
        if (mode == TrainMode::Oadg) {
            const std::uint64_t epoch_seed = stream_seed(seed, kMixTag, static_cast<std::uint64_t>(epoch));
            parallel_for(n, jobs, [&](std::size_t i) {
                Rng rng = make_rng(stream_seed(epoch_seed, i));
                OamixOutput mixed = oamix(train_set.samples[i], rng, config.oamix, &saliency[i]);
                mixed_features[i] = model.features(mixed.image);
                mixed_plans[i] = std::move(mixed.plan);
            });
        }

        LossBreakdown sum;
        int steps = 0;
        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end = std::min(n, start + static_cast<std::size_t>(config.batch_size));
            const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                               order.begin() + static_cast<std::ptrdiff_t>(end));
            const ViewBatch original = gather(clean_features, labels, idx);
            const TrainState before = on_step ? state : TrainState(DetectorParams{});
            LossBreakdown loss;
            if (mode == TrainMode::Baseline) {
                loss = baseline_step(state, original, config);
                if (on_step) on_step(StepRecord{before, state, original, nullptr});
            } else {
                const ViewBatch augmented = gather(mixed_features, labels, idx);
                std::vector<MixPlan> plans;
                std::vector<std::vector<Annotation>> anns;
                for (std::size_t i : idx) {
                    plans.push_back(mixed_plans[i]);
                    anns.push_back(train_set.samples[i].annotations);
                }
                Rng step_rng = make_rng(stream_seed(seed, kStepTag, static_cast<std::uint64_t>(epoch) * 1000003u + static_cast<std::uint64_t>(steps)));
                loss = train_step(state, original, augmented, plans, anns, image_size, hyper, step_rng, config, jobs);
                if (on_step) on_step(StepRecord{before, state, original, &augmented});
            }
            sum += loss;
            ++steps;
        }
        EpochLog entry;
        entry.epoch = epoch;
        entry.loss = sum;
        const double inv = 1.0 / std::max(steps, 1);
        entry.loss.det *= inv;
        entry.loss.cs *= inv;
        entry.loss.ct *= inv;
        entry.loss.oa *= inv;
        entry.loss.total *= inv;
        model.params = state.params;
        entry.clean_map = val_set.samples.empty() ? 0.0 : evaluate_dataset_map(model, val_set, config.score_threshold, jobs);
        result.log.push_back(entry);
    }
    model.params = state.params;
    return result;
}

std::string log_csv(const std::vector<EpochLog>& log) {
    std::ostringstream out;
    out.precision(17);
    out << "epoch,L_det,L_cs,L_ct,total,clean_mAP\n";
    for (const auto& e : log) {
        out << e.epoch << ',' << e.loss.det << ',' << e.loss.cs << ',' << e.loss.ct << ',' << e.loss.total << ','
            << e.clean_map << '\n';
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// inference

std::vector<Detection> detections_from_probabilities(const MatrixXd& probabilities, int grid, int image_size,
                                                     double score_threshold) {
    const int cell = image_size / grid;
    const int outputs = static_cast<int>(probabilities.cols());
    const int background = outputs - 1;
    std::vector<int> cls(static_cast<std::size_t>(grid) * grid, -1);
    for (int i = 0; i < grid * grid; ++i) {
        Index best = 0;
        const double p = probabilities.row(i).maxCoeff(&best);
        if (best != background && p >= score_threshold) cls[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    std::vector<char> seen(cls.size(), 0);
    std::vector<Detection> out;
    for (int start = 0; start < grid * grid; ++start) {
        if (cls[static_cast<std::size_t>(start)] < 0 || seen[static_cast<std::size_t>(start)]) continue;
        const int c = cls[static_cast<std::size_t>(start)];
        std::vector<int> stack{start};
        seen[static_cast<std::size_t>(start)] = 1;
        int min_x = grid, min_y = grid, max_x = -1, max_y = -1, count = 0;
        double score = 0.0;
        while (!stack.empty()) {
            const int cur = stack.back();
            stack.pop_back();
            const int x = cur % grid, y = cur / grid;
            min_x = std::min(min_x, x);
            max_x = std::max(max_x, x);
            min_y = std::min(min_y, y);
            max_y = std::max(max_y, y);
            score += probabilities(cur, c);
            ++count;
            const int nx[4] = {x - 1, x + 1, x, x};
            const int ny[4] = {y, y, y - 1, y + 1};
            for (int k = 0; k < 4; ++k) {
                if (nx[k] < 0 || ny[k] < 0 || nx[k] >= grid || ny[k] >= grid) continue;
                const int nb = ny[k] * grid + nx[k];
                if (!seen[static_cast<std::size_t>(nb)] && cls[static_cast<std::size_t>(nb)] == c) {
                    seen[static_cast<std::size_t>(nb)] = 1;
                    stack.push_back(nb);
                }
            }
        }
        out.push_back({BBox{min_x * cell, min_y * cell, (max_x - min_x + 1) * cell, (max_y - min_y + 1) * cell}, c,
                       score / count});
    }
    return out;
}

std::vector<Detection> detect(const Model& model, const ImageBuffer& image, double score_threshold) {
    const ForwardResult f = forward(model.params, model.features(image), false);
    return detections_from_probabilities(row_softmax(f.logits), model.features.grid, image.width(), score_threshold);
}

double evaluate_dataset_map(const Model& model, const Dataset& dataset, double score_threshold, int jobs) {
    std::vector<std::vector<Detection>> dets(dataset.samples.size());
    std::vector<std::vector<ClassLabelledBox>> gts(dataset.samples.size());
    parallel_for(dataset.samples.size(), jobs, [&](std::size_t i) {
        dets[i] = detect(model, dataset.samples[i].image, score_threshold);
        for (const auto& a : dataset.samples[i].annotations) gts[i].push_back({a.bbox, a.class_id});
    });
    return evaluate_map(dets, gts, model.num_classes()).map;
}

}  // namespace oadg
