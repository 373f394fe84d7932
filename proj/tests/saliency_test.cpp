#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "oadg/error.hpp"
#include "oadg/saliency.hpp"
#include "support/oracles.hpp"

using namespace oadg;

TEST(Saliency, MatchesNaiveDftOracle) {
    for (int size : {16, 64}) {
        for (std::uint64_t seed = 0; seed < 3; ++seed) {
            Rng rng = make_rng(stream_seed(100 + seed, static_cast<std::uint64_t>(size)));
            const ImageBuffer img = oracle::random_image(rng, size, size);
            SaliencyConfig cfg;
            cfg.work_size = size;
            const SaliencyMap map = spectral_residual_map(img, cfg);
            const std::vector<double> ref = oracle::naive_saliency(img);
            ASSERT_EQ(map.values.size(), ref.size());
            for (std::size_t i = 0; i < ref.size(); ++i) ASSERT_NEAR(map.values[i], ref[i], 1e-4) << "size " << size;
        }
    }
}

TEST(Saliency, RangeAndExtremes) {
    Rng rng = make_rng(9);
    const SaliencyMap map = spectral_residual_map(oracle::random_image(rng, 48, 40));
    EXPECT_EQ(map.width, 48);
    EXPECT_EQ(map.height, 40);
    const auto [lo, hi] = std::minmax_element(map.values.begin(), map.values.end());
    EXPECT_GE(*lo, 0.0);
    EXPECT_LE(*hi, 1.0);
}

TEST(Saliency, ConstantImageGivesZeroMap) {
    const SaliencyMap map = spectral_residual_map(ImageBuffer(64, 64, 0.37));
    for (double v : map.values) EXPECT_EQ(v, 0.0);
}

TEST(Saliency, BrightPatchHoldsTheArgmax) {
    // A flat black field has a degenerate spectrum, so use a faintly textured one.
    Rng rng = make_rng(1);
    ImageBuffer img(64, 64);
    for (double& v : img.data()) v = 0.4 + 0.1 * uniform01(rng);
    for (int y = 30; y < 34; ++y)
        for (int x = 20; x < 24; ++x)
            for (int c = 0; c < 3; ++c) img.at(x, y, c) = 1.0;
    const SaliencyMap map = spectral_residual_map(img);
    const auto it = std::max_element(map.values.begin(), map.values.end());
    const int idx = static_cast<int>(it - map.values.begin());
    const int ax = idx % 64, ay = idx / 64;
    const int reach = static_cast<int>(std::ceil(3.0 * 64 / 16.0));
    EXPECT_GE(ax, 20 - reach);
    EXPECT_LT(ax, 24 + reach);
    EXPECT_GE(ay, 30 - reach);
    EXPECT_LT(ay, 34 + reach);
}

TEST(Saliency, Deterministic) {
    Rng rng = make_rng(4);
    const ImageBuffer img = oracle::random_image(rng, 64, 64);
    EXPECT_EQ(spectral_residual_map(img), spectral_residual_map(img));
}

TEST(Saliency, WorkSizeClampedForSmallImages) {
    EXPECT_EQ(saliency_detail::clamped_work_size(64, 10, 20), 20);
    Rng rng = make_rng(5);
    const SaliencyMap map = spectral_residual_map(oracle::random_image(rng, 10, 20));
    EXPECT_EQ(map.width, 10);
    EXPECT_EQ(map.height, 20);
}

TEST(Saliency, EmptyImageIsDegenerate) {
    try {
        spectral_residual_map(ImageBuffer());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DegenerateImage);
    }
}

TEST(SaliencyScore, ConstantMap) {
    EXPECT_EQ(object_saliency_score(SaliencyMap(8, 8, 0.5), BBox{1, 1, 3, 2}), 0.5);
}

TEST(SaliencyScore, FullBoxIsGlobalMean) {
    Rng rng = make_rng(6);
    SaliencyMap map(7, 5);
    double sum = 0.0;
    for (double& v : map.values) sum += (v = uniform01(rng));
    EXPECT_NEAR(object_saliency_score(map, BBox{0, 0, 7, 5}), sum / 35.0, 1e-12);
}

TEST(SaliencyScore, TwoByTwo) {
    SaliencyMap map(4, 4, 0.0);
    map.at(1, 1) = 0.1;
    map.at(2, 1) = 0.2;
    map.at(1, 2) = 0.3;
    map.at(2, 2) = 0.4;
    EXPECT_NEAR(object_saliency_score(map, BBox{1, 1, 2, 2}), 0.25, 1e-15);
}

TEST(SaliencyScore, MonotoneUnderPointwiseIncrease) {
    Rng rng = make_rng(8);
    SaliencyMap a(10, 10), b(10, 10);
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        a.values[i] = 0.5 * uniform01(rng);
        b.values[i] = a.values[i] + 0.5 * uniform01(rng);
    }
    for (int t = 0; t < 50; ++t) {
        const int x = uniform_int(rng, 0, 8), y = uniform_int(rng, 0, 8);
        const BBox box{x, y, uniform_int(rng, 1, 10 - x), uniform_int(rng, 1, 10 - y)};
        EXPECT_GE(object_saliency_score(b, box), object_saliency_score(a, box));
    }
}

TEST(SaliencyScore, OutOfBounds) {
    try {
        object_saliency_score(SaliencyMap(4, 4), BBox{2, 2, 3, 1});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::BoxOutOfBounds);
    }
}
