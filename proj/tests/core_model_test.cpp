#include <cmath>
#include <fstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "oadg/dataset.hpp"
#include "oadg/error.hpp"
#include "oadg/image_io.hpp"
#include "oadg/rng.hpp"
#include "support/oracles.hpp"

using namespace oadg;

namespace {

Dataset two_image_dataset() {
    Rng rng = make_rng(7);
    Dataset d;
    d.classes = {"car", "person"};
    d.samples.push_back({oracle::random_image(rng, 16, 12), {{{1, 2, 5, 4}, 0}, {{0, 0, 16, 12}, 1}}, "s0"});
    d.samples.push_back({oracle::random_image(rng, 10, 10), {}, "s1"});
    return d;
}

void write_manifest(const std::filesystem::path& root, const nlohmann::json& doc) {
    std::ofstream(root / "annotations.json") << doc.dump();
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

TEST(BBox, EdgesAndValidity) {
    const BBox b{2, 3, 4, 5};
    EXPECT_EQ(b.right(), 6);
    EXPECT_EQ(b.bottom(), 8);
    EXPECT_EQ(b.area(), 20);
    EXPECT_TRUE(b.valid_within(6, 8));
    EXPECT_FALSE(b.valid_within(5, 8));
    EXPECT_FALSE((BBox{0, 0, 0, 3}).valid_within(10, 10));
    EXPECT_TRUE(b.contains(2, 3));
    EXPECT_FALSE(b.contains(6, 3));
}

TEST(ImageBuffer, ValidityTracksRange) {
    ImageBuffer img(3, 2, 0.5);
    EXPECT_EQ(img.size(), 18u);
    EXPECT_TRUE(img.is_valid());
    img.at(1, 1, 2) = 1.5;
    EXPECT_FALSE(img.is_valid());
    img.clamp();
    EXPECT_TRUE(img.is_valid());
    EXPECT_EQ(img.at(1, 1, 2), 1.0);
}

TEST(ImageIo, ByteQuantization) {
    EXPECT_EQ(to_byte(0.0), 0);
    EXPECT_EQ(to_byte(1.0), 255);
    EXPECT_EQ(to_byte(0.5), 128);
}

TEST(ImageIo, ZeroImageIsBlack) {
    oracle::TempDir dir("black");
    save_image(ImageBuffer(4, 3, 0.0), dir.path() / "z.png");
    const ImageBuffer back = load_image(dir.path() / "z.png");
    for (double v : back.data()) EXPECT_EQ(v, 0.0);
}

TEST(ImageIo, PngRoundTripWithinOneStep) {
    oracle::TempDir dir("png");
    Rng rng = make_rng(3);
    const ImageBuffer img = oracle::random_image(rng, 33, 17);
    save_image(img, dir.path() / "r.png");
    const ImageBuffer back = load_image(dir.path() / "r.png");
    ASSERT_EQ(back.width(), 33);
    ASSERT_EQ(back.height(), 17);
    double worst = 0.0;
    for (std::size_t i = 0; i < img.size(); ++i) worst = std::max(worst, std::abs(img.data()[i] - back.data()[i]));
    EXPECT_LE(worst, 1.0 / 255.0);
}

TEST(ImageIo, MissingImageIsMissingFile) {
    EXPECT_EQ(code_of([] { load_image("/nonexistent/x.png"); }), ErrorCode::MissingFile);
}

TEST(Dataset, SaveLoadRoundTrip) {
    oracle::TempDir dir("ds");
    const Dataset d = two_image_dataset();
    save_dataset(d, dir.path());
    const Dataset back = load_dataset(dir.path());
    EXPECT_EQ(back.classes, d.classes);
    ASSERT_EQ(back.samples.size(), 2u);
    for (std::size_t i = 0; i < 2; ++i) {
        EXPECT_EQ(back.samples[i].id, d.samples[i].id);
        EXPECT_EQ(back.samples[i].annotations, d.samples[i].annotations);
        EXPECT_EQ(back.samples[i].image.width(), d.samples[i].image.width());
    }
    EXPECT_TRUE(back.samples[1].annotations.empty());
}

TEST(Dataset, ParallelLoadMatchesSerial) {
    oracle::TempDir dir("dsj");
    save_dataset(two_image_dataset(), dir.path());
    const Dataset a = load_dataset(dir.path(), 1);
    const Dataset b = load_dataset(dir.path(), 3);
    ASSERT_EQ(a.samples.size(), b.samples.size());
    for (std::size_t i = 0; i < a.samples.size(); ++i) EXPECT_EQ(a.samples[i].image, b.samples[i].image);
}

TEST(Dataset, MissingManifest) {
    oracle::TempDir dir("empty");
    EXPECT_EQ(code_of([&] { load_dataset(dir.path()); }), ErrorCode::MissingFile);
}

TEST(Dataset, MalformedJson) {
    oracle::TempDir dir("bad");
    std::ofstream(dir.path() / "annotations.json") << "{ not json";
    EXPECT_EQ(code_of([&] { load_dataset(dir.path()); }), ErrorCode::MalformedJson);
}

TEST(Dataset, BoxPastRightEdge) {
    oracle::TempDir dir("oob");
    save_dataset(two_image_dataset(), dir.path());
    nlohmann::json doc;
    std::ifstream(dir.path() / "annotations.json") >> doc;
    doc["annotations"][0]["bbox"] = {12, 0, 5, 4};  // 12 + 5 > 16
    write_manifest(dir.path(), doc);
    EXPECT_EQ(code_of([&] { load_dataset(dir.path()); }), ErrorCode::BoxOutOfBounds);
}

TEST(Dataset, UnknownClass) {
    oracle::TempDir dir("cls");
    save_dataset(two_image_dataset(), dir.path());
    nlohmann::json doc;
    std::ifstream(dir.path() / "annotations.json") >> doc;
    doc["annotations"][0]["class_id"] = 2;
    write_manifest(dir.path(), doc);
    EXPECT_EQ(code_of([&] { load_dataset(dir.path()); }), ErrorCode::UnknownClassId);
}

TEST(Dataset, ReferencedImageMissing) {
    oracle::TempDir dir("img");
    save_dataset(two_image_dataset(), dir.path());
    std::filesystem::remove(dir.path() / "s1.png");
    EXPECT_EQ(code_of([&] { load_dataset(dir.path()); }), ErrorCode::MissingFile);
}

TEST(ValidateDataset, CleanDatasetHasNoViolations) { EXPECT_TRUE(validate_dataset(two_image_dataset()).empty()); }

TEST(ValidateDataset, DuplicateIdIsOneViolation) {
    Dataset d = two_image_dataset();
    d.samples[1].id = "s0";
    EXPECT_EQ(validate_dataset(d).size(), 1u);
}

TEST(ValidateDataset, ZeroWidthBoxIsOneViolation) {
    Dataset d = two_image_dataset();
    d.samples[0].annotations[0].bbox.w = 0;
    EXPECT_EQ(validate_dataset(d).size(), 1u);
}

TEST(Rng, StreamsAreReproducibleAndDistinct) {
    EXPECT_EQ(stream_seed(5, 1), stream_seed(5, 1));
    EXPECT_NE(stream_seed(5, 1), stream_seed(5, 2));
    EXPECT_NE(stream_seed(5, 1), stream_seed(6, 1));
    Rng a = make_rng(11), b = make_rng(11);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(uniform_int(a, -3, 9), uniform_int(b, -3, 9));
}

TEST(Rng, UniformIntCoversRangeEvenly) {
    Rng rng = make_rng(1);
    std::vector<int> counts(5, 0);
    const int draws = 50000;
    for (int i = 0; i < draws; ++i) ++counts[static_cast<std::size_t>(uniform_int(rng, 0, 4))];
    const double expected = draws / 5.0;
    const double sigma = std::sqrt(draws * 0.2 * 0.8);
    for (int c : counts) EXPECT_LT(std::abs(c - expected), 4.0 * sigma);
}

TEST(Rng, PoissonMeanAndVariance) {
    Rng rng = make_rng(2);
    const double mean = 7.5;
    const int draws = 40000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < draws; ++i) {
        const double k = sample_poisson(rng, mean);
        sum += k;
        sq += k * k;
    }
    const double m = sum / draws;
    EXPECT_NEAR(m, mean, 4.0 * std::sqrt(mean / draws));
    EXPECT_NEAR(sq / draws - m * m, mean, 0.3);
}
