#include "oadg/oaloss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "oadg/error.hpp"

namespace oadg {

ContrastiveHead ContrastiveHead::zeros(int in, int hidden, int out) {
    return {Eigen::MatrixXd::Zero(hidden, in), Eigen::VectorXd::Zero(hidden), Eigen::MatrixXd::Zero(out, hidden),
            Eigen::VectorXd::Zero(out)};
}

namespace {

Eigen::MatrixXd he_uniform(int rows, int cols, Rng& rng) {
    const double limit = std::sqrt(6.0 / cols);
    Eigen::MatrixXd m(rows, cols);
    // Fill row by row so the draw order is independent of Eigen's storage order.
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m(r, c) = uniform_real(rng, -limit, limit);
    return m;
}

}  // namespace

ContrastiveHead ContrastiveHead::random(int in, int hidden, int out, Rng& rng) {
    ContrastiveHead h = zeros(in, hidden, out);
    h.w1 = he_uniform(hidden, in, rng);
    h.w2 = he_uniform(out, hidden, rng);
    return h;
}

Eigen::VectorXd project_contrastive(const Eigen::VectorXd& feature, const ContrastiveHead& head) {
    if (feature.size() != head.w1.cols() || head.b1.size() != head.w1.rows() || head.w2.cols() != head.w1.rows() ||
        head.b2.size() != head.w2.rows()) {
        throw Error(ErrorCode::DimMismatch, "contrastive head does not match feature size");
    }
    const Eigen::VectorXd hidden = (head.w1 * feature + head.b1).cwiseMax(0.0);
    return head.w2 * hidden + head.b2;
}

HeadForward project_contrastive_batch(const Eigen::MatrixXd& input, const ContrastiveHead& head) {
    if (input.cols() != head.w1.cols() || head.w2.cols() != head.w1.rows()) {
        throw Error(ErrorCode::DimMismatch, "contrastive head does not match feature size");
    }
    HeadForward f;
    f.pre_activation = (input * head.w1.transpose()).rowwise() + head.b1.transpose();
    f.hidden = f.pre_activation.cwiseMax(0.0);
    f.output = (f.hidden * head.w2.transpose()).rowwise() + head.b2.transpose();
    return f;
}

HeadGrad project_contrastive_backward(const Eigen::MatrixXd& input, const ContrastiveHead& head,
                                      const HeadForward& forward, const Eigen::MatrixXd& grad_output) {
    HeadGrad g;
    g.params.w2 = grad_output.transpose() * forward.hidden;
    g.params.b2 = grad_output.colwise().sum().transpose();
    Eigen::MatrixXd grad_hidden = grad_output * head.w2;
    grad_hidden = (forward.pre_activation.array() > 0.0).select(grad_hidden, 0.0);
    g.params.w1 = grad_hidden.transpose() * input;
    g.params.b1 = grad_hidden.colwise().sum().transpose();
    g.input = grad_hidden * head.w1;
    return g;
}

void validate_batch(const ContrastiveBatch& batch) {
    const auto n = static_cast<std::size_t>(batch.features.rows());
    if (n < 2) throw Error(ErrorCode::EmptyBatch, "contrastive batch needs at least two features");
    if (batch.labels.size() != n) throw Error(ErrorCode::DimMismatch, "labels and features differ in count");
    if (!(batch.tau > 0.0)) throw Error(ErrorCode::InvalidArgument, "tau must be positive");
    std::vector<char> used(n, 0);
    for (const auto& [a, b] : batch.pairs) {
        if (a >= n || b >= n || a == b) throw Error(ErrorCode::PairingMismatch, "pair index out of range or self-paired");
        if (used[a] || used[b]) throw Error(ErrorCode::PairingMismatch, "index appears in more than one pair");
        if (!(batch.labels[a] == batch.labels[b])) throw Error(ErrorCode::PairingMismatch, "paired instances differ in label");
        used[a] = used[b] = 1;
    }
}

std::vector<std::vector<std::size_t>> build_positive_sets(const ContrastiveBatch& batch) {
    const std::size_t n = batch.labels.size();
    std::vector<std::vector<std::size_t>> positives(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (batch.labels[i].background) continue;
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i && !batch.labels[j].background && batch.labels[j].class_id == batch.labels[i].class_id) {
                positives[i].push_back(j);
            }
        }
    }
    for (const auto& [a, b] : batch.pairs) {
        if (a < n && b < n && batch.labels[a].background) positives[a].push_back(b);
        if (a < n && b < n && batch.labels[b].background) positives[b].push_back(a);
    }
    return positives;
}

LossValueWithGrad contrastive_loss(const ContrastiveBatch& batch) {
    validate_batch(batch);
    const Eigen::Index n = batch.features.rows();
    const Eigen::Index d = batch.features.cols();

    Eigen::VectorXd norms = batch.features.rowwise().norm();
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!(norms(i) >= 1e-12)) throw Error(ErrorCode::ZeroNormFeature, "feature " + std::to_string(i));
    }
    const Eigen::MatrixXd unit = norms.cwiseInverse().asDiagonal() * batch.features;
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const RowMajor logits = (unit * unit.transpose()) / batch.tau;

    const auto positives = build_positive_sets(batch);
    std::size_t active = 0;
    for (const auto& p : positives) active += p.empty() ? 0 : 1;

    LossValueWithGrad result;
    result.grad = Eigen::MatrixXd::Zero(n, d);
    if (active == 0) return result;

    // coeff(i, k) = dValue / dlogits(i, k)
    RowMajor coeff = RowMajor::Zero(n, n);
    double total = 0.0;
    const double inv_active = 1.0 / static_cast<double>(active);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& pos = positives[static_cast<std::size_t>(i)];
        if (pos.empty()) continue;
        Eigen::Index arg_max = i == 0 ? 1 : 0;
        for (Eigen::Index k = 0; k < n; ++k) {
            if (k != i && logits(i, k) > logits(i, arg_max)) arg_max = k;
        }
        const double max_logit = logits(i, arg_max);
        // The denominator is 1 + rest; log1p keeps nearly saturated anchors accurate.
        double rest = 0.0;
        for (Eigen::Index k = 0; k < n; ++k) {
            if (k == i) continue;
            const double e = k == arg_max ? 1.0 : std::exp(logits(i, k) - max_logit);
            coeff(i, k) = e;
            if (k != arg_max) rest += e;
        }
        const double denom = 1.0 + rest;
        const double log_rest = std::log1p(rest);
        const double inv_pos = 1.0 / static_cast<double>(pos.size());
        double anchor = 0.0;
        for (std::size_t j : pos) anchor += (max_logit - logits(i, static_cast<Eigen::Index>(j))) + log_rest;
        total += anchor * inv_pos;
        const double scale = inv_active / denom;
        for (Eigen::Index k = 0; k < n; ++k) coeff(i, k) *= scale;
        for (std::size_t j : pos) coeff(i, static_cast<Eigen::Index>(j)) -= inv_pos * inv_active;
    }
    result.value = total * inv_active;

    const Eigen::MatrixXd grad_unit = ((coeff + coeff.transpose()) * unit) / batch.tau;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double radial = unit.row(i).dot(grad_unit.row(i));
        result.grad.row(i) = (grad_unit.row(i) - radial * unit.row(i)) / norms(i);
    }
    return result;
}

namespace {

void check_simplex(std::span<const double> p, const char* name) {
    double sum = 0.0;
    for (double v : p) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw Error(ErrorCode::NotOnSimplex, std::string(name) + " has a negative entry");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw Error(ErrorCode::NotOnSimplex, std::string(name) + " does not sum to 1");
}

}  // namespace

LossValueWithGrad js_consistency(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size() || p.empty()) throw Error(ErrorCode::DimMismatch, "probability vectors differ in size");
    check_simplex(p, "p");
    check_simplex(q, "p_plus");
    const std::size_t k = p.size();

    std::vector<double> mid(k);
    for (std::size_t i = 0; i < k; ++i) mid[i] = 0.5 * (p[i] + q[i]);
    auto kl_to_mid = [&](std::span<const double> a) {
        double kl = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            if (a[i] > 0.0) kl += a[i] * std::log(a[i] / mid[i]);
        }
        return kl;
    };
    const double kl_p = kl_to_mid(p);
    const double kl_q = kl_to_mid(q);

    LossValueWithGrad result;
    result.value = 0.5 * (kl_p + kl_q);
    // dJS/dp_i = 0.5 log(p_i / m_i); through softmax: p_i (g_i - <p, g>), and <p, g> = 0.5 KL(p || m).
    result.grad = Eigen::MatrixXd::Zero(2, static_cast<Eigen::Index>(k));
    for (std::size_t i = 0; i < k; ++i) {
        const auto col = static_cast<Eigen::Index>(i);
        if (p[i] > 0.0) result.grad(0, col) = 0.5 * p[i] * (std::log(p[i] / mid[i]) - kl_p);
        if (q[i] > 0.0) result.grad(1, col) = 0.5 * q[i] * (std::log(q[i] / mid[i]) - kl_q);
    }
    return result;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
    const double mx = logits.maxCoeff();
    Eigen::VectorXd e = (logits.array() - mx).exp();
    return e / e.sum();
}

double numeric_partial(const DifferentiableFn& fn, std::vector<double>& x, std::size_t i, double h) {
    const double saved = x[i];
    auto at = [&](double offset) {
        x[i] = saved + offset;
        return fn(x, nullptr);
    };
    const double wide = at(h) - at(-h);
    const double narrow = at(0.5 * h) - at(-0.5 * h);
    x[i] = saved;
    return (8.0 * narrow - wide) / (6.0 * h);
}

GradCheckResult grad_check(const DifferentiableFn& fn, std::span<const double> x, double h) {
    std::vector<double> analytic;
    fn(x, &analytic);
    if (analytic.size() != x.size()) throw Error(ErrorCode::DimMismatch, "gradient size differs from input size");
    std::vector<double> probe(x.begin(), x.end());
    GradCheckResult result;
    for (std::size_t i = 0; i < probe.size(); ++i) {
        const double numeric = numeric_partial(fn, probe, i, h);
        const double err = std::abs(analytic[i] - numeric) / std::max(1e-8, std::abs(analytic[i]) + std::abs(numeric));
        if (err > result.max_rel_error) {
            result.max_rel_error = err;
            result.worst_index = i;
        }
    }
    return result;
}

}  // namespace oadg
