#pragma once

#include <cstdint>

#include "oadg/oaloss.hpp"

namespace oadg {

struct GradcheckReport {
    double contrastive = 0.0;  // worst over trials
    double consistency = 0.0;
    double joint = 0.0;
    int trials = 0;

    static constexpr double kLossTolerance = 1e-4;
    static constexpr double kJointTolerance = 1e-3;

    bool passed() const {
        return contrastive <= kLossTolerance && consistency <= kLossTolerance && joint <= kJointTolerance;
    }
};

/// `trials` random contrastive batches and logit pairs, plus `joint_trials`
/// end-to-end checks of the joint objective on a two-image micro-batch.
GradcheckReport run_gradcheck(std::uint64_t seed, int trials, int joint_trials = 1, const Hyper& hyper = {});

/// Worst relative error of the contrastive gradient on one random batch.
double contrastive_gradcheck(Rng& rng, double tau);
double consistency_gradcheck(Rng& rng);
/// Finite-difference steps shrink (down to 1e-7) while a probe pair straddles a
/// ReLU kink of the classifier or the contrastive head.
double joint_gradcheck(std::uint64_t seed, const Hyper& hyper);

}  // namespace oadg
