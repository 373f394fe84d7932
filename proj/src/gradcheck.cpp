#include "oadg/gradcheck.hpp"

#include <algorithm>
#include <vector>

#include "oadg/detector.hpp"
#include "oadg/features.hpp"
#include "oadg/oamix.hpp"
#include "oadg/synth.hpp"

namespace oadg {

namespace {

InstanceLabel random_label(Rng& rng) {
    const int c = uniform_int(rng, -1, 2);
    return c < 0 ? InstanceLabel::bg() : InstanceLabel::foreground(c);
}

}  // namespace

double contrastive_gradcheck(Rng& rng, double tau) {
    const int n = uniform_int(rng, 2, 8);
    const int d = uniform_int(rng, 2, 6);
    ContrastiveBatch batch;
    batch.tau = tau;
    batch.features.resize(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) batch.features(i, j) = sample_normal(rng);
    for (int i = 0; i < n; ++i) batch.labels.push_back(random_label(rng));
    // Pair consecutive indices as original/augmented views of one instance.
    for (int i = 0; i + 1 < n; i += 2) {
        if (uniform01(rng) < 0.7) {
            batch.labels[static_cast<std::size_t>(i + 1)] = batch.labels[static_cast<std::size_t>(i)];
            batch.pairs.emplace_back(i, i + 1);
        }
    }
    const DifferentiableFn fn = [&](std::span<const double> x, std::vector<double>* grad) {
        ContrastiveBatch b = batch;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) b.features(i, j) = x[static_cast<std::size_t>(i * d + j)];
        const LossValueWithGrad r = contrastive_loss(b);
        if (grad != nullptr) {
            grad->resize(x.size());
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < d; ++j) (*grad)[static_cast<std::size_t>(i * d + j)] = r.grad(i, j);
        }
        return r.value;
    };
    std::vector<double> x;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) x.push_back(batch.features(i, j));
    return grad_check(fn, x).max_rel_error;
}

double consistency_gradcheck(Rng& rng) {
    const int k = uniform_int(rng, 2, 6);
    std::vector<double> x(static_cast<std::size_t>(2 * k));
    for (double& v : x) v = 2.0 * sample_normal(rng);
    const DifferentiableFn fn = [k](std::span<const double> z, std::vector<double>* grad) {
        const Eigen::VectorXd p = softmax(Eigen::Map<const Eigen::VectorXd>(z.data(), k));
        const Eigen::VectorXd q = softmax(Eigen::Map<const Eigen::VectorXd>(z.data() + k, k));
        const LossValueWithGrad r = js_consistency(std::span<const double>(p.data(), static_cast<std::size_t>(k)),
                                                   std::span<const double>(q.data(), static_cast<std::size_t>(k)));
        if (grad != nullptr) {
            grad->resize(z.size());
            for (int i = 0; i < k; ++i) {
                (*grad)[static_cast<std::size_t>(i)] = r.grad(0, i);
                (*grad)[static_cast<std::size_t>(k + i)] = r.grad(1, i);
            }
        }
        return r.value;
    };
    return grad_check(fn, x).max_rel_error;
}

double joint_gradcheck(std::uint64_t seed, const Hyper& hyper) {
    SynthConfig synth;
    synth.seed = seed;
    Rng rng = make_rng(stream_seed(seed, 1));
    std::vector<SampleRecord> samples{generate_scene(rng, synth, "a"), generate_scene(rng, synth, "b")};

    TrainConfig config;
    std::vector<const ImageBuffer*> images{&samples[0].image, &samples[1].image};
    const FeatureExtractor extractor = FeatureExtractor::fit(images, synth.grid, config.lifted_dim, stream_seed(seed, 2));
    Rng init = make_rng(stream_seed(seed, 3));
    DetectorParams params = DetectorParams::random(config.lifted_dim, config.hidden, synth.num_classes() + 1,
                                                   config.head_hidden, config.head_out, init);
    // Non-zero biases so no unit sits exactly on its kink.
    for (Eigen::Index i = 0; i < params.b1.size(); ++i) params.b1(i) = 0.1 * sample_normal(init);
    for (Eigen::Index i = 0; i < params.head.b1.size(); ++i) params.head.b1(i) = 0.1 * sample_normal(init);

    ViewBatch original, augmented;
    original.cells_per_image = augmented.cells_per_image = synth.grid * synth.grid;
    std::vector<MixPlan> plans;
    std::vector<std::vector<Annotation>> annotations;
    original.features.resize(2 * original.cells_per_image, config.lifted_dim);
    augmented.features.resize(2 * original.cells_per_image, config.lifted_dim);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        Rng mix_rng = make_rng(stream_seed(seed, 4, i));
        const OamixOutput mixed = oamix(samples[i], mix_rng, config.oamix);
        const auto rows = static_cast<Eigen::Index>(i) * original.cells_per_image;
        original.features.middleRows(rows, original.cells_per_image) = extractor(samples[i].image);
        augmented.features.middleRows(rows, original.cells_per_image) = extractor(mixed.image);
        const auto labels = assign_labels(synth.image_size, synth.grid, samples[i].annotations, config.label_threshold);
        original.labels.insert(original.labels.end(), labels.begin(), labels.end());
        plans.push_back(mixed.plan);
        annotations.push_back(samples[i].annotations);
    }
    augmented.labels = original.labels;
    Rng plan_rng = make_rng(stream_seed(seed, 5));
    const ContrastivePlan plan = build_contrastive_plan(original, plans, annotations, synth.image_size, config, plan_rng);

    const DifferentiableFn fn = [&](std::span<const double> x, std::vector<double>* grad) {
        const DetectorParams p = unflatten(x, params);
        DetectorParams g;
        const LossBreakdown loss = evaluate_joint(p, original, augmented, plan, hyper, grad != nullptr ? &g : nullptr);
        if (grad != nullptr) *grad = flatten(g);
        return loss.total;
    };
    // ReLU on/off pattern of every classifier row and every pooled head input.
    const ViewBatch both = concat(original, augmented);
    auto pattern = [&](std::span<const double> x) {
        const DetectorParams p = unflatten(x, params);
        const ForwardResult f = forward(p, both.features, false);
        std::vector<char> bits(static_cast<std::size_t>(f.pre_hidden.size()));
        for (Eigen::Index i = 0; i < f.pre_hidden.size(); ++i) bits[static_cast<std::size_t>(i)] = f.pre_hidden.data()[i] > 0.0;
        for (const auto& group : plan.groups) {
            for (const auto& entry : group.entries) {
                Eigen::VectorXd pooled = Eigen::VectorXd::Zero(f.hidden.cols());
                for (int r : entry.rows) pooled += f.hidden.row(r).transpose();
                pooled /= static_cast<double>(entry.rows.size());
                const Eigen::VectorXd pre = p.head.w1 * pooled + p.head.b1;
                for (Eigen::Index k = 0; k < pre.size(); ++k) bits.push_back(pre(k) > 0.0);
            }
        }
        return bits;
    };

    // A difference quotient is only a derivative reference on a smooth piece,
    // so the step shrinks until the outer probes share the activation pattern.
    std::vector<double> x = flatten(params);
    std::vector<double> analytic;
    fn(x, &analytic);
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x[i];
        double h = 1e-3;
        for (;;) {
            x[i] = saved + h;
            const auto up = pattern(x);
            x[i] = saved - h;
            const auto down = pattern(x);
            x[i] = saved;
            if (up == down || h < 1e-7) break;
            h /= 10.0;
        }
        const double numeric = numeric_partial(fn, x, i, h);
        worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1e-8, std::abs(analytic[i]) + std::abs(numeric)));
    }
    return worst;
}

GradcheckReport run_gradcheck(std::uint64_t seed, int trials, int joint_trials, const Hyper& hyper) {
    GradcheckReport report;
    report.trials = trials;
    for (int t = 0; t < trials; ++t) {
        Rng rng = make_rng(stream_seed(seed, static_cast<std::uint64_t>(t)));
        report.contrastive = std::max(report.contrastive, contrastive_gradcheck(rng, hyper.tau));
        report.consistency = std::max(report.consistency, consistency_gradcheck(rng));
    }
    for (int t = 0; t < joint_trials; ++t) {
        report.joint = std::max(report.joint, joint_gradcheck(stream_seed(seed, 1000003u, static_cast<std::uint64_t>(t)), hyper));
    }
    return report;
}

}  // namespace oadg
