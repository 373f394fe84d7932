#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "oadg/corruptions.hpp"
#include "oadg/error.hpp"
#include "oadg/transforms.hpp"
#include "support/oracles.hpp"

using namespace oadg;

namespace {

const std::vector<TransformKind> kColor{TransformKind::Equalize, TransformKind::Posterize, TransformKind::Solarize,
                                        TransformKind::Gamma, TransformKind::HueRotate};
const std::vector<TransformKind> kSpatial{TransformKind::Rotate, TransformKind::ShearX, TransformKind::ShearY,
                                          TransformKind::TranslateX, TransformKind::TranslateY};

bool outside_identical(const ImageBuffer& a, const ImageBuffer& b, const BBox& rect) {
    for (int y = 0; y < a.height(); ++y)
        for (int x = 0; x < a.width(); ++x)
            if (!rect.contains(x, y))
                for (int c = 0; c < 3; ++c)
                    if (a.at(x, y, c) != b.at(x, y, c)) return false;
    return true;
}

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::InvalidArgument;
}

}  // namespace

TEST(MagnitudeTables, Endpoints) {
    EXPECT_DOUBLE_EQ(gamma_for_level(1), 0.5);
    EXPECT_DOUBLE_EQ(gamma_for_level(10), 2.0);
    EXPECT_EQ(posterize_levels_for_level(1), 256);
    EXPECT_EQ(posterize_levels_for_level(10), 4);
    EXPECT_DOUBLE_EQ(solarize_threshold_for_level(1), 1.0);
    EXPECT_NEAR(solarize_threshold_for_level(10), 0.4, 1e-15);
    EXPECT_DOUBLE_EQ(hue_degrees_for_level(4), 12.0);
    EXPECT_DOUBLE_EQ(rotate_degrees_for_level(10), 20.0);
    EXPECT_DOUBLE_EQ(shear_for_level(5), 0.1);
    EXPECT_DOUBLE_EQ(translate_fraction_for_level(10), 0.2);
}

TEST(ColorOps, UnitGammaIsIdentity) {
    Rng rng = make_rng(1);
    const ImageBuffer img = oracle::random_image(rng, 12, 9);
    ImageBuffer out = img;
    gamma_correct(out, BBox{0, 0, 12, 9}, 1.0);
    for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(out.data()[i], img.data()[i], 1e-15);
}

TEST(ColorOps, SolarizeAtThresholdOneIsIdentity) {
    Rng rng = make_rng(2);
    const ImageBuffer img = oracle::random_image(rng, 10, 10);
    EXPECT_EQ(apply_color_op(img, BBox{0, 0, 10, 10}, {TransformKind::Solarize, 1}), img);
}

TEST(ColorOps, PosterizeFourLevels) {
    const ImageBuffer img(4, 4, 0.30);
    const ImageBuffer out = apply_color_op(img, BBox{0, 0, 4, 4}, {TransformKind::Posterize, 10});
    for (double v : out.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(ColorOps, SolarizeInvertsAboveThreshold) {
    ImageBuffer img(2, 1, 0.0);
    img.at(0, 0, 0) = 0.9;
    img.at(1, 0, 0) = 0.3;
    solarize(img, BBox{0, 0, 2, 1}, 0.5);
    EXPECT_NEAR(img.at(0, 0, 0), 0.1, 1e-15);
    EXPECT_EQ(img.at(1, 0, 0), 0.3);
}

TEST(ColorOps, HueRotateFullTurnIsIdentity) {
    Rng rng = make_rng(3);
    const ImageBuffer img = oracle::random_image(rng, 6, 6);
    ImageBuffer out = img;
    hue_rotate(out, BBox{0, 0, 6, 6}, 360.0);
    for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(out.data()[i], img.data()[i], 1e-12);
}

TEST(ColorOps, HueRotateKeepsGray) {
    const ImageBuffer img(3, 3, 0.42);
    ImageBuffer out = img;
    hue_rotate(out, BBox{0, 0, 3, 3}, 27.0);
    for (double v : out.data()) EXPECT_NEAR(v, 0.42, 1e-15);
}

TEST(ColorOps, EqualizeStretchesToFullRange) {
    ImageBuffer img(4, 1, 0.0);
    const double vals[4] = {0.2, 0.4, 0.4, 0.6};
    for (int x = 0; x < 4; ++x)
        for (int c = 0; c < 3; ++c) img.at(x, 0, c) = vals[x];
    equalize(img, BBox{0, 0, 4, 1});
    EXPECT_EQ(img.at(0, 0, 0), 0.0);
    EXPECT_EQ(img.at(3, 0, 0), 1.0);
    EXPECT_EQ(img.at(1, 0, 0), img.at(2, 0, 0));
}

TEST(ColorOps, EqualizeLeavesSingleLevelAlone) {
    const ImageBuffer img(3, 3, 0.25);
    ImageBuffer out = img;
    equalize(out, BBox{0, 0, 3, 3});
    EXPECT_EQ(out, img);
}

TEST(ColorOps, LocalityAndRange) {
    Rng rng = make_rng(4);
    const ImageBuffer img = oracle::random_image(rng, 20, 16);
    const BBox rect{3, 5, 9, 7};
    for (TransformKind k : kColor) {
        for (int m : {1, 5, 10}) {
            for (bool neg : {false, true}) {
                const ImageBuffer out = apply_color_op(img, rect, {k, m, neg});
                EXPECT_TRUE(outside_identical(img, out, rect)) << to_string(k);
                EXPECT_TRUE(out.is_valid());
            }
        }
    }
}

TEST(ColorOps, RejectsSpatialKindsAndBadRects) {
    const ImageBuffer img(8, 8, 0.5);
    EXPECT_EQ(code_of([&] { apply_color_op(img, BBox{0, 0, 8, 8}, {TransformKind::Rotate, 3}); }),
              ErrorCode::WrongOpCategory);
    EXPECT_EQ(code_of([&] { apply_color_op(img, BBox{4, 4, 5, 2}, {TransformKind::Gamma, 3}); }),
              ErrorCode::BoxOutOfBounds);
    EXPECT_EQ(code_of([&] { apply_spatial_op_in_box(img, BBox{0, 0, 8, 8}, {TransformKind::Gamma, 3}); }),
              ErrorCode::WrongOpCategory);
}

TEST(SpatialOps, ZeroAngleIsIdentity) {
    Rng rng = make_rng(5);
    const ImageBuffer img = oracle::random_image(rng, 16, 16);
    ImageBuffer out = img;
    warp_in_box(out, BBox{2, 3, 9, 7}, WarpParams{});
    EXPECT_EQ(out, img);
}

TEST(SpatialOps, TranslateOnConstantCropIsIdentity) {
    ImageBuffer img(16, 16, 0.1);
    const BBox box{4, 4, 8, 6};
    for (int y = box.y; y < box.bottom(); ++y)
        for (int x = box.x; x < box.right(); ++x)
            for (int c = 0; c < 3; ++c) img.at(x, y, c) = 0.7;
    const ImageBuffer there = apply_spatial_op_in_box(img, box, {TransformKind::TranslateX, 6, false});
    const ImageBuffer back = apply_spatial_op_in_box(there, box, {TransformKind::TranslateX, 6, true});
    EXPECT_EQ(back, img);
}

TEST(SpatialOps, QuarterTurnMatchesNaiveRotation) {
    Rng rng = make_rng(6);
    const ImageBuffer img = oracle::random_image(rng, 20, 20);
    for (const BBox box : {BBox{3, 2, 9, 9}, BBox{5, 6, 8, 8}}) {
        ImageBuffer out = img;
        warp_in_box(out, box, WarpParams{90.0});
        const double c = (box.w - 1) / 2.0;
        for (int y = 0; y < box.h; ++y) {
            for (int x = 0; x < box.w; ++x) {
                // Inverse of a counter-clockwise quarter turn in image axes.
                const int sx = static_cast<int>(std::lround(c + (y - c)));
                const int sy = static_cast<int>(std::lround(c - (x - c)));
                for (int ch = 0; ch < 3; ++ch) {
                    ASSERT_NEAR(out.at(box.x + x, box.y + y, ch), img.at(box.x + sx, box.y + sy, ch), 1e-12);
                }
            }
        }
        EXPECT_TRUE(outside_identical(img, out, box));
    }
}

TEST(SpatialOps, LocalityAndRange) {
    Rng rng = make_rng(7);
    const ImageBuffer img = oracle::random_image(rng, 24, 24);
    const BBox box{5, 4, 11, 13};
    for (TransformKind k : kSpatial) {
        for (int m : {1, 10}) {
            const ImageBuffer out = apply_spatial_op_in_box(img, box, {k, m, m == 10});
            EXPECT_TRUE(outside_identical(img, out, box)) << to_string(k);
            EXPECT_TRUE(out.is_valid());
        }
    }
}

TEST(Chains, ApplyChainComposesOps) {
    Rng rng = make_rng(8);
    const ImageBuffer img = oracle::random_image(rng, 16, 16);
    const BBox rect{2, 2, 10, 10};
    const TransformChain chain{{TransformKind::Gamma, 3}, {TransformKind::Rotate, 4, true}, {TransformKind::Posterize, 7}};
    const ImageBuffer step = apply_color_op(apply_spatial_op_in_box(apply_color_op(img, rect, chain[0]), rect, chain[1]),
                                            rect, chain[2]);
    EXPECT_EQ(apply_chain(img, rect, chain), step);
}

TEST(Chains, ImageLevelNeverSpatial) {
    Rng rng = make_rng(9);
    for (int i = 0; i < 10000; ++i) {
        for (RegionLevel level : {RegionLevel::Image, RegionLevel::RandomBox}) {
            for (const auto& op : sample_chain(rng, level)) ASSERT_FALSE(is_spatial(op.kind));
        }
    }
}

TEST(Chains, ForegroundDrawsBothCategories) {
    Rng rng = make_rng(10);
    std::set<TransformKind> seen;
    for (int i = 0; i < 2000; ++i)
        for (const auto& op : sample_chain(rng, RegionLevel::Foreground)) seen.insert(op.kind);
    EXPECT_EQ(seen.size(), all_transform_kinds().size());
}

TEST(Chains, Deterministic) {
    Rng a = make_rng(11), b = make_rng(11);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(sample_chain(a, RegionLevel::Foreground), sample_chain(b, RegionLevel::Foreground));
}

TEST(Chains, LengthUniformOnOneToThree) {
    Rng rng = make_rng(12);
    const int draws = 10000;
    std::vector<int> counts(4, 0);
    int magnitude_low = 0, magnitude_high = 0;
    for (int i = 0; i < draws; ++i) {
        const auto chain = sample_chain(rng, RegionLevel::Image);
        ASSERT_GE(chain.size(), 1u);
        ASSERT_LE(chain.size(), 3u);
        ++counts[chain.size()];
        for (const auto& op : chain) {
            ASSERT_GE(op.magnitude, 1);
            ASSERT_LE(op.magnitude, 10);
            magnitude_low += op.magnitude == 1;
            magnitude_high += op.magnitude == 10;
        }
    }
    const double p = 1.0 / 3.0;
    const double sigma = std::sqrt(draws * p * (1 - p));
    for (int len = 1; len <= 3; ++len) EXPECT_LT(std::abs(counts[static_cast<std::size_t>(len)] - draws * p), 3.0 * sigma);
    EXPECT_GT(magnitude_low, 0);
    EXPECT_GT(magnitude_high, 0);
}

TEST(Names, RoundTrip) {
    for (TransformKind k : all_transform_kinds()) EXPECT_EQ(parse_transform_kind(to_string(k)), k);
    EXPECT_FALSE(parse_transform_kind("brightness").has_value());
}

TEST(Names, PoolDisjointFromCorruptions) {
    for (TransformKind t : all_transform_kinds())
        for (CorruptionKind c : all_corruption_kinds()) EXPECT_NE(to_string(t), to_string(c));
    // The pool carries no op that imitates an evaluated corruption.
    for (const char* banned : {"brightness", "contrast", "pixelate", "blur", "noise", "sharpness"}) {
        for (TransformKind t : all_transform_kinds()) EXPECT_EQ(std::string(to_string(t)).find(banned), std::string::npos);
    }
}
