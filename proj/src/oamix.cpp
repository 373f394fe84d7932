#include "oadg/oamix.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "oadg/error.hpp"
#include "oadg/parallel.hpp"

namespace oadg {

namespace {

int level_rank(RegionLevel level) {
    switch (level) {
        case RegionLevel::Foreground: return 2;
        case RegionLevel::RandomBox: return 1;
        case RegionLevel::Image: return 0;
    }
    return 0;
}

// True when region a takes precedence over region b.
bool beats(const Region& a, std::size_t ia, const Region& b, std::size_t ib) {
    const int ra = level_rank(a.level), rb = level_rank(b.level);
    if (ra != rb) return ra > rb;
    if (a.rect.area() != b.rect.area()) return a.rect.area() < b.rect.area();
    return ia < ib;
}

int random_side(Rng& rng, int dim, const OamixConfig& config) {
    const double frac = uniform_real(rng, config.random_box_min_fraction, config.random_box_max_fraction);
    return std::clamp(static_cast<int>(std::lround(frac * dim)), 1, dim);
}

}  // namespace

std::vector<Region> partition_regions(int width, int height, const std::vector<Annotation>& annotations, Rng& rng,
                                      const OamixConfig& config) {
    std::vector<Region> regions;
    regions.push_back({RegionLevel::Image, BBox{0, 0, width, height}, 0.0, std::nullopt});

    const int boxes = uniform_int(rng, config.min_random_boxes, config.max_random_boxes);
    for (int i = 0; i < boxes; ++i) {
        const int w = random_side(rng, width, config);
        const int h = random_side(rng, height, config);
        const int x = uniform_int(rng, 0, width - w);
        const int y = uniform_int(rng, 0, height - h);
        regions.push_back({RegionLevel::RandomBox, BBox{x, y, w, h}, 0.0, std::nullopt});
    }
    for (const auto& a : annotations) {
        if (!a.bbox.valid_within(width, height)) throw Error(ErrorCode::BoxOutOfBounds, "annotation outside image");
        regions.push_back({RegionLevel::Foreground, a.bbox, 0.0, a.class_id});
    }
    return regions;
}

std::vector<int> precedence_owner(int width, int height, const std::vector<Region>& regions) {
    std::vector<int> owner(static_cast<std::size_t>(width) * height, -1);
    for (std::size_t i = 0; i < regions.size(); ++i) {
        const BBox& r = regions[i].rect;
        for (int y = std::max(r.y, 0); y < std::min(r.bottom(), height); ++y) {
            for (int x = std::max(r.x, 0); x < std::min(r.right(), width); ++x) {
                int& o = owner[static_cast<std::size_t>(y) * width + x];
                if (o < 0 || beats(regions[i], i, regions[static_cast<std::size_t>(o)], static_cast<std::size_t>(o))) {
                    o = static_cast<int>(i);
                }
            }
        }
    }
    return owner;
}

double sample_mixing_weight(double saliency, Rng& rng, const OamixConfig& config) {
    if (saliency >= config.saliency_threshold) return sample_beta(rng, config.high_alpha, config.high_beta);
    return sample_beta(rng, config.low_alpha, config.low_beta);
}

OamixOutput oamix(const SampleRecord& sample, Rng& rng, const OamixConfig& config, const SaliencyMap* saliency) {
    const ImageBuffer& original = sample.image;
    const int width = original.width(), height = original.height();

    SaliencyMap computed;
    if (saliency == nullptr) {
        computed = spectral_residual_map(original, config.saliency);
        saliency = &computed;
    }

    OamixOutput out;
    out.annotations = sample.annotations;
    MixPlan& plan = out.plan;
    plan.regions = partition_regions(width, height, sample.annotations, rng, config);
    for (auto& region : plan.regions) region.saliency = object_saliency_score(*saliency, region.rect);

    const std::vector<int> owner = precedence_owner(width, height, plan.regions);

    for (const auto& region : plan.regions) {
        plan.chains.push_back(config.force_identity ? TransformChain{} : sample_chain(rng, region.level, config.transforms));
        plan.weights.push_back(config.force_weight ? std::clamp(*config.force_weight, 0.0, 1.0)
                                                   : sample_mixing_weight(region.saliency, rng, config));
    }

    out.image = original;
    for (std::size_t i = 0; i < plan.regions.size(); ++i) {
        const BBox& rect = plan.regions[i].rect;
        const double m = plan.weights[i];
        const ImageBuffer augmented = apply_chain(original, rect, plan.chains[i]);
        for (int y = rect.y; y < rect.bottom(); ++y) {
            for (int x = rect.x; x < rect.right(); ++x) {
                if (owner[static_cast<std::size_t>(y) * width + x] != static_cast<int>(i)) continue;
                for (int c = 0; c < ImageBuffer::kChannels; ++c) {
                    const double o = original.at(x, y, c);
                    const double a = augmented.at(x, y, c);
                    const double mixed = o + m * (a - o);
                    out.image.at(x, y, c) = std::clamp(mixed, std::min(o, a), std::max(o, a));
                }
            }
        }
    }
    return out;
}

std::vector<OamixOutput> oamix_batch(const std::vector<SampleRecord>& samples, std::uint64_t seed,
                                     const OamixConfig& config, int jobs) {
    std::vector<OamixOutput> outputs(samples.size());
    parallel_for(samples.size(), jobs, [&](std::size_t i) {
        Rng rng = make_rng(stream_seed(seed, i));
        outputs[i] = oamix(samples[i], rng, config);
    });
    return outputs;
}

nlohmann::json mixplan_to_json(const MixPlan& plan) {
    nlohmann::json regions = nlohmann::json::array();
    for (std::size_t i = 0; i < plan.regions.size(); ++i) {
        const Region& r = plan.regions[i];
        nlohmann::json chain = nlohmann::json::array();
        for (const auto& op : plan.chains[i]) {
            chain.push_back({{"kind", to_string(op.kind)}, {"magnitude", op.magnitude}, {"negate", op.negate}});
        }
        nlohmann::json entry = {{"level", to_string(r.level)},
                                {"rect", {r.rect.x, r.rect.y, r.rect.w, r.rect.h}},
                                {"saliency", r.saliency},
                                {"chain", chain},
                                {"weight", plan.weights[i]}};
        if (r.class_id) entry["class_id"] = *r.class_id;
        regions.push_back(std::move(entry));
    }
    return {{"regions", regions}};
}

}  // namespace oadg
