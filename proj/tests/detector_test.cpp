#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "oadg/detector.hpp"
#include "oadg/error.hpp"
#include "oadg/gradcheck.hpp"
#include "oadg/synth.hpp"
#include "support/oracles.hpp"

using namespace oadg;

namespace {

struct Fixture {
    std::vector<SampleRecord> scenes;
    FeatureExtractor extractor;
    ViewBatch original;
    ViewBatch augmented;
    std::vector<MixPlan> plans;
    std::vector<std::vector<Annotation>> annotations;
};

Fixture make_fixture(std::uint64_t seed, int images) {
    Fixture f;
    Rng rng = make_rng(seed);
    std::vector<const ImageBuffer*> ptrs;
    for (int i = 0; i < images; ++i) f.scenes.push_back(generate_scene(rng, SynthConfig{}, "f" + std::to_string(i)));
    for (const auto& s : f.scenes) ptrs.push_back(&s.image);
    f.extractor = FeatureExtractor::fit(ptrs, 8, 16, seed);
    f.original.features.resize(64 * images, 16);
    f.augmented.features.resize(64 * images, 16);
    for (int i = 0; i < images; ++i) {
        const auto& s = f.scenes[static_cast<std::size_t>(i)];
        Rng mix = make_rng(stream_seed(seed, 1, static_cast<std::uint64_t>(i)));
        OamixOutput out = oamix(s, mix);
        f.original.features.middleRows(64 * i, 64) = f.extractor(s.image);
        f.augmented.features.middleRows(64 * i, 64) = f.extractor(out.image);
        const auto labels = assign_labels(64, 8, s.annotations);
        f.original.labels.insert(f.original.labels.end(), labels.begin(), labels.end());
        f.plans.push_back(std::move(out.plan));
        f.annotations.push_back(s.annotations);
    }
    f.augmented.labels = f.original.labels;
    return f;
}

TrainConfig small_config() {
    TrainConfig c;
    c.hidden = 12;
    c.lifted_dim = 16;
    c.head_hidden = 8;
    c.head_out = 4;
    return c;
}

DetectorParams small_params(std::uint64_t seed) {
    Rng rng = make_rng(seed);
    const TrainConfig c = small_config();
    return DetectorParams::random(c.lifted_dim, c.hidden, 4, c.head_hidden, c.head_out, rng);
}

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no oadg::Error thrown";
    return ErrorCode::InvalidArgument;
}

}  // namespace

TEST(Synth, ScenesAreDeterministic) {
    Rng a = make_rng(3), b = make_rng(3);
    const SampleRecord x = generate_scene(a, SynthConfig{}), y = generate_scene(b, SynthConfig{});
    EXPECT_EQ(x.image, y.image);
    EXPECT_EQ(x.annotations, y.annotations);
}

TEST(Synth, BoxesValidAndDisjointOverManyScenes) {
    Rng rng = make_rng(4);
    const SynthConfig cfg;
    for (int t = 0; t < 10000; ++t) {
        const SampleRecord s = generate_scene(rng, cfg);
        ASSERT_GE(s.annotations.size(), 1u);
        ASSERT_LE(s.annotations.size(), 4u);
        ASSERT_TRUE(s.image.is_valid());
        for (std::size_t i = 0; i < s.annotations.size(); ++i) {
            const auto& a = s.annotations[i];
            ASSERT_TRUE(a.bbox.valid_within(64, 64));
            ASSERT_GE(a.class_id, 0);
            ASSERT_LT(a.class_id, 3);
            if (a.class_id == static_cast<int>(ShapeClass::Circle)) ASSERT_LE(std::abs(a.bbox.w - a.bbox.h), 1);
            for (std::size_t j = 0; j < i; ++j) {
                const auto& b = s.annotations[j].bbox;
                const bool apart = a.bbox.right() <= b.x || b.right() <= a.bbox.x || a.bbox.bottom() <= b.y ||
                                   b.bottom() <= a.bbox.y;
                ASSERT_TRUE(apart);
            }
        }
    }
}

TEST(Synth, SplitsAreReproducible) {
    SynthConfig cfg;
    cfg.train_count = 6;
    cfg.val_count = 2;
    cfg.test_count = 3;
    const SynthSplits a = generate_splits(cfg, 1), b = generate_splits(cfg, 3);
    ASSERT_EQ(a.train.samples.size(), 6u);
    ASSERT_EQ(a.test.samples.size(), 3u);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(a.train.samples[i].image, b.train.samples[i].image);
    EXPECT_NE(a.train.samples[0].image, a.test.samples[0].image);
}

TEST(Synth, GridMustDivideImage) {
    SynthConfig cfg;
    cfg.image_size = 60;
    EXPECT_EQ(code_of([&] { validate(cfg); }), ErrorCode::ConfigError);
}

TEST(Labels, CoverageThreshold) {
    // Cells are 8x8. The box covers cell (0,0) fully and cell (1,0) by half.
    const std::vector<Annotation> anns{{{0, 0, 12, 8}, 2}};
    const auto labels = assign_labels(64, 8, anns);
    EXPECT_EQ(labels[0], InstanceLabel::foreground(2));
    EXPECT_EQ(labels[1], InstanceLabel::foreground(2));
    EXPECT_TRUE(labels[8].background);
    EXPECT_TRUE(assign_labels(64, 8, anns, 0.6)[1].background);
    EXPECT_EQ(std::count_if(labels.begin(), labels.end(), [](const InstanceLabel& l) { return !l.background; }), 2);
}

TEST(Labels, TiesPreferSmallerBoxThenLowerClass) {
    const std::vector<Annotation> overlap{{{0, 0, 16, 16}, 0}, {{0, 0, 8, 8}, 1}};
    EXPECT_EQ(assign_labels(64, 8, overlap)[0], InstanceLabel::foreground(1));
    const std::vector<Annotation> same{{{0, 0, 8, 8}, 2}, {{0, 0, 8, 8}, 1}};
    EXPECT_EQ(assign_labels(64, 8, same)[0], InstanceLabel::foreground(1));
}

TEST(Labels, CellsCoveredFallsBackToCenter) {
    EXPECT_EQ(cells_covered(64, 8, {0, 0, 16, 8}), (std::vector<int>{0, 1}));
    EXPECT_EQ(cells_covered(64, 8, {17, 9, 3, 3}), (std::vector<int>{10}));
}

TEST(Forward, ZeroParamsGiveUniformProbabilities) {
    const DetectorParams p = DetectorParams::zeros(5, 6, 4, 3, 2);
    const ForwardResult f = forward(p, Eigen::MatrixXd::Ones(3, 5));
    EXPECT_EQ(f.logits.norm(), 0.0);
    const Eigen::VectorXd probs = softmax(f.logits.row(0).transpose());
    for (Eigen::Index k = 0; k < 4; ++k) EXPECT_DOUBLE_EQ(probs(k), 0.25);
}

TEST(Forward, MatchesLoopOracleAndShapes) {
    Rng rng = make_rng(5);
    DetectorParams p = small_params(5);
    for (Eigen::Index i = 0; i < p.b1.size(); ++i) p.b1(i) = 0.1 * sample_normal(rng);
    Eigen::MatrixXd x(7, 16);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = sample_normal(rng);
    const ForwardResult f = forward(p, x);
    EXPECT_EQ(f.hidden.rows(), 7);
    EXPECT_EQ(f.hidden.cols(), 12);
    EXPECT_EQ(f.logits.cols(), 4);
    EXPECT_EQ(f.contrastive.cols(), 4);
    for (Eigen::Index r = 0; r < 7; ++r) {
        const Eigen::VectorXd ref = oracle::mlp(p.w1, p.b1, p.w2, p.b2, x.row(r).transpose());
        EXPECT_NEAR((f.logits.row(r).transpose() - ref).norm(), 0.0, 1e-12);
    }
    EXPECT_EQ(forward(p, x, false).contrastive.size(), 0);
    EXPECT_EQ(code_of([&] { forward(p, Eigen::MatrixXd::Ones(2, 3)); }), ErrorCode::DimMismatch);
}

TEST(Params, FlattenRoundTrip) {
    const DetectorParams p = small_params(6);
    const std::vector<double> flat = flatten(p);
    EXPECT_EQ(flatten(unflatten(flat, p)), flat);
}

TEST(Params, ModelJsonRoundTrip) {
    const Fixture f = make_fixture(7, 2);
    Model m;
    m.classes = {"circle", "triangle", "square"};
    m.features = f.extractor;
    m.params = small_params(7);
    const Model back = model_from_json(nlohmann::json::parse(to_json(m).dump()));
    EXPECT_EQ(back.classes, m.classes);
    EXPECT_EQ(flatten(back.params), flatten(m.params));
    EXPECT_EQ(back.features(f.scenes[0].image), m.features(f.scenes[0].image));

    oracle::TempDir dir("model");
    save_model(m, dir.path() / "params.json");
    EXPECT_EQ(flatten(load_model(dir.path() / "params.json").params), flatten(m.params));
    EXPECT_EQ(code_of([&] { load_model(dir.path() / "missing.json"); }), ErrorCode::MissingFile);
}

TEST(Detect, SingleCellBecomesOneBox) {
    Eigen::MatrixXd probs = Eigen::MatrixXd::Zero(64, 4);
    probs.col(3).setOnes();
    probs.row(10) << 0.1, 0.8, 0.05, 0.05;
    const auto dets = detections_from_probabilities(probs, 8, 64, 0.3);
    ASSERT_EQ(dets.size(), 1u);
    EXPECT_EQ(dets[0].box, (BBox{16, 8, 8, 8}));
    EXPECT_EQ(dets[0].class_id, 1);
    EXPECT_DOUBLE_EQ(dets[0].score, 0.8);
}

TEST(Detect, DiagonalCellsAreSeparateAndBlocksMerge) {
    Eigen::MatrixXd probs = Eigen::MatrixXd::Zero(64, 4);
    probs.col(3).setOnes();
    for (int i : {0, 9}) probs.row(i) << 0.9, 0.0, 0.0, 0.1;
    EXPECT_EQ(detections_from_probabilities(probs, 8, 64, 0.3).size(), 2u);
    probs.row(1) << 0.5, 0.0, 0.0, 0.5;  // argmax tie resolves to the first class
    const auto merged = detections_from_probabilities(probs, 8, 64, 0.3);
    ASSERT_EQ(merged.size(), 1u);
    EXPECT_EQ(merged[0].box, (BBox{0, 0, 16, 16}));
    EXPECT_NEAR(merged[0].score, (0.9 + 0.9 + 0.5) / 3.0, 1e-15);
}

TEST(Detect, BackgroundOrLowScoreGivesNothing) {
    Eigen::MatrixXd probs = Eigen::MatrixXd::Constant(64, 4, 0.25);
    probs.col(3).setConstant(0.26);
    EXPECT_TRUE(detections_from_probabilities(probs, 8, 64, 0.3).empty());
    probs.col(3).setConstant(0.1);
    probs.col(0).setConstant(0.29);
    EXPECT_TRUE(detections_from_probabilities(probs, 8, 64, 0.3).empty());
}

TEST(JointLoss, IdenticalViewsHaveZeroConsistency) {
    const Fixture f = make_fixture(8, 2);
    const LossBreakdown l = evaluate_joint(small_params(8), f.original, f.original, ContrastivePlan{}, Hyper{}, nullptr);
    EXPECT_EQ(l.cs, 0.0);
    EXPECT_EQ(l.ct, 0.0);
    EXPECT_EQ(l.total, l.det);
}

TEST(JointLoss, TotalRecomposes) {
    const Fixture f = make_fixture(9, 4);
    Rng rng = make_rng(9);
    const TrainConfig cfg = small_config();
    const ContrastivePlan plan = build_contrastive_plan(f.original, f.plans, f.annotations, 64, cfg, rng);
    const Hyper hyper{0.06, 0.001, 10.0};
    const LossBreakdown l = evaluate_joint(small_params(9), f.original, f.augmented, plan, hyper, nullptr);
    EXPECT_GT(l.cs, 0.0);
    EXPECT_GT(l.ct, 0.0);
    EXPECT_NEAR(l.oa, l.cs + hyper.gamma * l.ct, 1e-15);
    EXPECT_NEAR(l.total, l.det + hyper.lambda * (l.cs + hyper.gamma * l.ct), 1e-12);
    const LossBreakdown det = evaluate_detection(small_params(9), concat(f.original, f.augmented), nullptr);
    EXPECT_NEAR(det.det, l.det, 1e-12);
}

TEST(JointLoss, PlanPairsViewsAndLabels) {
    const Fixture f = make_fixture(10, 4);
    Rng rng = make_rng(10);
    const ContrastivePlan plan = build_contrastive_plan(f.original, f.plans, f.annotations, 64, small_config(), rng);
    ASSERT_EQ(plan.groups.size(), 1u);
    const int n = static_cast<int>(f.original.labels.size());
    for (const auto& g : plan.groups) {
        for (const auto& [a, b] : g.pairs) {
            EXPECT_EQ(g.entries[a].label, g.entries[b].label);
            for (int r : g.entries[a].rows) EXPECT_LT(r, n);
            for (int r : g.entries[b].rows) EXPECT_GE(r, n);
        }
        EXPECT_EQ(g.pairs.size() * 2, g.entries.size());
    }
}

TEST(JointLoss, GroupConcurrencyDoesNotChangeResults) {
    const Fixture f = make_fixture(11, 8);
    TrainConfig cfg = small_config();
    cfg.contrastive_group = 2;
    Rng rng = make_rng(11);
    const ContrastivePlan plan = build_contrastive_plan(f.original, f.plans, f.annotations, 64, cfg, rng);
    ASSERT_EQ(plan.groups.size(), 4u);
    DetectorParams g1, g3;
    const LossBreakdown a = evaluate_joint(small_params(11), f.original, f.augmented, plan, Hyper{}, &g1, 1);
    const LossBreakdown b = evaluate_joint(small_params(11), f.original, f.augmented, plan, Hyper{}, &g3, 3);
    EXPECT_EQ(a.total, b.total);
    EXPECT_EQ(flatten(g1), flatten(g3));
}

TEST(JointLoss, MismatchedViewsRejected) {
    const Fixture f = make_fixture(12, 2);
    ViewBatch other = f.augmented;
    other.labels[0] = InstanceLabel::foreground(0);
    other.labels[1] = InstanceLabel::foreground(1);
    EXPECT_EQ(code_of([&] { evaluate_joint(small_params(12), f.original, other, {}, Hyper{}, nullptr); }),
              ErrorCode::PairingMismatch);
    TrainState state(small_params(12));
    Rng rng = make_rng(0);
    EXPECT_EQ(code_of([&] {
                  train_step(state, f.original, other, f.plans, f.annotations, 64, Hyper{}, rng, small_config());
              }),
              ErrorCode::PairingMismatch);
}

TEST(JointLoss, GradientMatchesFiniteDifferences) {
    EXPECT_LE(joint_gradcheck(3, Hyper{}), GradcheckReport::kJointTolerance);
}

TEST(TrainStep, ZeroLambdaEqualsBaselineOnBothViews) {
    const Fixture f = make_fixture(13, 4);
    const TrainConfig cfg = small_config();
    TrainState joint(small_params(13)), plain(small_params(13));
    const ViewBatch both = concat(f.original, f.augmented);
    for (int step = 0; step < 3; ++step) {
        Rng rng = make_rng(static_cast<std::uint64_t>(step));
        train_step(joint, f.original, f.augmented, f.plans, f.annotations, 64, Hyper{0.06, 0.001, 0.0}, rng, cfg);
        baseline_step(plain, both, cfg);
        ASSERT_EQ(flatten(joint.params), flatten(plain.params)) << "step " << step;
    }
}

TEST(TrainStep, SgdMomentum) {
    TrainState s(DetectorParams::zeros(1, 1, 2, 1, 1));
    DetectorParams g = DetectorParams::zeros(1, 1, 2, 1, 1);
    g.b2(0) = 1.0;
    sgd_update(s, g, 0.1, 0.9);
    sgd_update(s, g, 0.1, 0.9);
    EXPECT_DOUBLE_EQ(s.velocity.b2(0), 1.9);
    EXPECT_DOUBLE_EQ(s.params.b2(0), -0.1 - 0.19);
}

namespace {

SynthSplits tiny_splits() {
    SynthConfig cfg;
    cfg.train_count = 24;
    cfg.val_count = 6;
    cfg.test_count = 1;
    cfg.seed = 5;
    return generate_splits(cfg);
}

}  // namespace

TEST(Train, ReproducibleAndIndependentOfJobs) {
    const SynthSplits data = tiny_splits();
    TrainConfig cfg = small_config();
    cfg.epochs = 2;
    cfg.batch_size = 8;
    const TrainResult a = train(data.train, data.val, cfg, Hyper{}, TrainMode::Oadg, 1, 1);
    const TrainResult b = train(data.train, data.val, cfg, Hyper{}, TrainMode::Oadg, 1, 3);
    EXPECT_EQ(flatten(a.model.params), flatten(b.model.params));
    EXPECT_EQ(log_csv(a.log), log_csv(b.log));
    ASSERT_EQ(a.log.size(), 2u);
    EXPECT_GT(a.log[0].loss.ct, 0.0);
    EXPECT_EQ(log_csv(a.log).substr(0, log_csv(a.log).find('\n')), "epoch,L_det,L_cs,L_ct,total,clean_mAP");
}

TEST(Train, ZeroLambdaTrajectoryTracksBaselineSteps) {
    const SynthSplits data = tiny_splits();
    TrainConfig cfg = small_config();
    cfg.epochs = 1;
    cfg.batch_size = 8;
    int steps = 0;
    train(data.train, data.val, cfg, Hyper{0.06, 0.001, 0.0}, TrainMode::Oadg, 2, 1, [&](const StepRecord& r) {
        ASSERT_NE(r.augmented, nullptr);
        TrainState replay = r.before;
        baseline_step(replay, concat(r.original, *r.augmented), cfg);
        EXPECT_EQ(flatten(replay.params), flatten(r.after.params));
        ++steps;
    });
    EXPECT_EQ(steps, 3);
}

TEST(Train, BaselineLearnsSomething) {
    const SynthSplits data = tiny_splits();
    TrainConfig cfg = small_config();
    cfg.epochs = 5;
    cfg.batch_size = 8;
    const TrainResult r = train(data.train, data.val, cfg, Hyper{}, TrainMode::Baseline, 3);
    EXPECT_LT(r.log.back().loss.det, r.log.front().loss.det);
    EXPECT_EQ(r.log.front().loss.cs, 0.0);
}
