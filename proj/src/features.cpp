#include "oadg/features.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "oadg/error.hpp"
#include "oadg/rng.hpp"

namespace oadg {

Eigen::MatrixXd raw_cell_features(const ImageBuffer& image, int grid) {
    const int w = image.width(), h = image.height();
    if (grid <= 0 || w % grid != 0 || h % grid != 0) throw Error(ErrorCode::DimMismatch, "image dims not divisible by grid");
    const int cw = w / grid, ch = h / grid;
    const GrayImage gray = to_gray(image);

    GrayImage sobel(w, h);
    auto g = [&](int x, int y) { return gray.at(std::clamp(x, 0, w - 1), std::clamp(y, 0, h - 1)); };
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double gx = (g(x + 1, y - 1) + 2 * g(x + 1, y) + g(x + 1, y + 1)) - (g(x - 1, y - 1) + 2 * g(x - 1, y) + g(x - 1, y + 1));
            const double gy = (g(x - 1, y + 1) + 2 * g(x, y + 1) + g(x + 1, y + 1)) - (g(x - 1, y - 1) + 2 * g(x, y - 1) + g(x + 1, y - 1));
            sobel.at(x, y) = std::sqrt(gx * gx + gy * gy);
        }
    }

    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(grid * grid, kRawCellFeatures);
    const double count = static_cast<double>(cw * ch);
    for (int gy = 0; gy < grid; ++gy) {
        for (int gx = 0; gx < grid; ++gx) {
            const int row = gy * grid + gx;
            double sum[3] = {0, 0, 0}, sq[3] = {0, 0, 0};
            double edge = 0.0;
            for (int y = gy * ch; y < (gy + 1) * ch; ++y) {
                for (int x = gx * cw; x < (gx + 1) * cw; ++x) {
                    for (int c = 0; c < 3; ++c) {
                        const double v = image.at(x, y, c);
                        sum[c] += v;
                        sq[c] += v * v;
                    }
                    const int bin = std::clamp(static_cast<int>(gray.at(x, y) * 8.0), 0, 7);
                    out(row, 6 + bin) += 1.0 / count;
                    edge += sobel.at(x, y);
                }
            }
            for (int c = 0; c < 3; ++c) {
                const double mean = sum[c] / count;
                out(row, c) = mean;
                out(row, 3 + c) = std::max(0.0, sq[c] / count - mean * mean);
            }
            out(row, 14) = edge / count;
        }
    }
    return out;
}

FeatureExtractor FeatureExtractor::fit(const std::vector<const ImageBuffer*>& training_images, int grid, int lifted_dim,
                                       std::uint64_t lift_seed) {
    if (training_images.empty()) throw Error(ErrorCode::InvalidArgument, "feature statistics need training images");
    FeatureExtractor fx;
    fx.grid = grid;
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(kRawCellFeatures);
    Eigen::VectorXd sq = Eigen::VectorXd::Zero(kRawCellFeatures);
    double rows = 0.0;
    for (const ImageBuffer* img : training_images) {
        const Eigen::MatrixXd raw = raw_cell_features(*img, grid);
        sum += raw.colwise().sum().transpose();
        sq += raw.array().square().matrix().colwise().sum().transpose();
        rows += static_cast<double>(raw.rows());
    }
    fx.mean = sum / rows;
    fx.scale.resize(kRawCellFeatures);
    for (int i = 0; i < kRawCellFeatures; ++i) {
        const double var = std::max(0.0, sq(i) / rows - fx.mean(i) * fx.mean(i));
        fx.scale(i) = var > 1e-12 ? 1.0 / std::sqrt(var) : 1.0;
    }
    Rng rng = make_rng(lift_seed);
    fx.lift.resize(lifted_dim, kRawCellFeatures);
    const double s = 1.0 / std::sqrt(static_cast<double>(kRawCellFeatures));
    for (int r = 0; r < lifted_dim; ++r)
        for (int c = 0; c < kRawCellFeatures; ++c) fx.lift(r, c) = s * sample_normal(rng);
    return fx;
}

Eigen::MatrixXd FeatureExtractor::operator()(const ImageBuffer& image) const {
    Eigen::MatrixXd raw = raw_cell_features(image, grid);
    raw = ((raw.rowwise() - mean.transpose()).array().rowwise() * scale.transpose().array()).matrix();
    return raw * lift.transpose();
}

namespace {

std::vector<double> flatten_rows(const Eigen::MatrixXd& m) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
    return out;
}

}  // namespace

nlohmann::json to_json(const FeatureExtractor& fx) {
    return {{"grid", fx.grid},
            {"mean", std::vector<double>(fx.mean.data(), fx.mean.data() + fx.mean.size())},
            {"scale", std::vector<double>(fx.scale.data(), fx.scale.data() + fx.scale.size())},
            {"lift_dims", {fx.lift.rows(), fx.lift.cols()}},
            {"lift", flatten_rows(fx.lift)}};
}

FeatureExtractor feature_extractor_from_json(const nlohmann::json& j) {
    try {
        FeatureExtractor fx;
        fx.grid = j.at("grid").get<int>();
        const auto mean = j.at("mean").get<std::vector<double>>();
        const auto scale = j.at("scale").get<std::vector<double>>();
        const auto dims = j.at("lift_dims").get<std::vector<Eigen::Index>>();
        const auto lift = j.at("lift").get<std::vector<double>>();
        if (mean.size() != kRawCellFeatures || scale.size() != kRawCellFeatures || dims.size() != 2 ||
            dims[1] != kRawCellFeatures || static_cast<Eigen::Index>(lift.size()) != dims[0] * dims[1]) {
            throw Error(ErrorCode::DimMismatch, "feature extractor arrays have wrong sizes");
        }
        fx.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), kRawCellFeatures);
        fx.scale = Eigen::Map<const Eigen::VectorXd>(scale.data(), kRawCellFeatures);
        fx.lift.resize(dims[0], dims[1]);
        for (Eigen::Index r = 0; r < dims[0]; ++r)
            for (Eigen::Index c = 0; c < dims[1]; ++c) fx.lift(r, c) = lift[static_cast<std::size_t>(r * dims[1] + c)];
        return fx;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::MalformedJson, std::string("feature extractor: ") + e.what());
    }
}

}  // namespace oadg
