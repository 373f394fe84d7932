#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "oadg/rng.hpp"

namespace oadg {

struct InstanceLabel {
    bool background = true;
    int class_id = -1;

    static InstanceLabel foreground(int c) { return {false, c}; }
    static InstanceLabel bg() { return {true, -1}; }

    friend bool operator==(const InstanceLabel&, const InstanceLabel&) = default;
};

/// Features are the rows of `features`. `pairs` links an original-view
/// instance with its augmented counterpart; each index appears in at most one pair.
struct ContrastiveBatch {
    Eigen::MatrixXd features;
    std::vector<InstanceLabel> labels;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    double tau = 0.06;
};

/// `grad` has the shape of the differentiated input: N x D for the
/// contrastive loss, 2 x (K+1) logit rows for the consistency loss.
struct LossValueWithGrad {
    double value = 0.0;
    Eigen::MatrixXd grad;
};

struct Hyper {
    double tau = 0.06;
    double gamma = 0.001;
    double lambda = 10.0;
};

/// Two-layer MLP: z = W2 relu(W1 f + b1) + b2.
struct ContrastiveHead {
    Eigen::MatrixXd w1;  // hidden x in
    Eigen::VectorXd b1;
    Eigen::MatrixXd w2;  // out x hidden
    Eigen::VectorXd b2;

    static ContrastiveHead zeros(int in, int hidden, int out);
    /// He-uniform weights, zero biases.
    static ContrastiveHead random(int in, int hidden, int out, Rng& rng);
};

Eigen::VectorXd project_contrastive(const Eigen::VectorXd& feature, const ContrastiveHead& head);

/// Batched head evaluation on the rows of `input`, keeping what backward needs.
struct HeadForward {
    Eigen::MatrixXd pre_activation;  // N x hidden
    Eigen::MatrixXd hidden;          // N x hidden
    Eigen::MatrixXd output;          // N x out
};
HeadForward project_contrastive_batch(const Eigen::MatrixXd& input, const ContrastiveHead& head);

struct HeadGrad {
    ContrastiveHead params;
    Eigen::MatrixXd input;  // N x in
};
HeadGrad project_contrastive_backward(const Eigen::MatrixXd& input, const ContrastiveHead& head,
                                      const HeadForward& forward, const Eigen::MatrixXd& grad_output);

/// Throws PairingMismatch, EmptyBatch or InvalidArgument when the batch is malformed.
void validate_batch(const ContrastiveBatch& batch);

/// Foreground anchors: every other instance of the same class. Background
/// anchors: their paired counterpart, if any.
std::vector<std::vector<std::size_t>> build_positive_sets(const ContrastiveBatch& batch);

/// Object-aware supervised contrastive loss on L2-normalized features,
/// averaged over anchors whose positive set is non-empty. The gradient is
/// taken with respect to the raw (unnormalized) features.
LossValueWithGrad contrastive_loss(const ContrastiveBatch& batch);

/// Jensen-Shannon divergence (natural log). The gradient is in logit space:
/// row 0 for the logits behind `p`, row 1 for those behind `p_plus`.
LossValueWithGrad js_consistency(std::span<const double> p, std::span<const double> p_plus);

Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

inline double oa_loss(double consistency, double contrastive, double gamma) { return consistency + gamma * contrastive; }
inline double joint_loss(double detection, double object_aware, double lambda) { return detection + lambda * object_aware; }

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
};

/// f(x, grad) returns the value and, when grad is non-null, writes the
/// analytic gradient into it.
using DifferentiableFn = std::function<double(std::span<const double>, std::vector<double>*)>;

/// Richardson-extrapolated central difference of component i with outer step h:
/// (8 [f(x + h/2) - f(x - h/2)] - [f(x + h) - f(x - h)]) / (6 h). `x` is
/// restored before returning.
double numeric_partial(const DifferentiableFn& fn, std::vector<double>& x, std::size_t i, double h);

/// numeric_partial against the analytic gradient; the relative error of each
/// component is |a - n| / max(1e-8, |a| + |n|).
GradCheckResult grad_check(const DifferentiableFn& fn, std::span<const double> x, double h = 1e-3);

}  // namespace oadg
