#ifndef TSC_LOSSES_HPP
#define TSC_LOSSES_HPP

#include <cstdint>
#include <vector>

#include "tsc/assignment.hpp"
#include "tsc/targets.hpp"
#include "tsc/vecmath.hpp"

namespace tsc {

// One batch of embedded samples. features[i] and aug_features[i] are the two
// views of sample i, both unit vectors. ids give each sample a stable
// identity; positive sampling is seeded from them so the loss does not depend
// on the order samples appear in. An empty ids vector means 0..N-1.
struct FeatureBatch {
    Mat features;
    Mat aug_features;
    std::vector<int> labels;
    std::vector<std::uint64_t> ids;

    int size() const { return static_cast<int>(features.size()); }
    int dim() const { return features.empty() ? 0 : static_cast<int>(features[0].size()); }
    std::uint64_t id(int i) const {
        return ids.empty() ? static_cast<std::uint64_t>(i) : ids[i];
    }
};

struct LossConfig {
    int k = 6;            // same-class positives drawn per anchor
    double lambda = 0.2;  // weight of the target-pull term
    double tau = 0.07;
    std::uint64_t positive_sampling_seed = 0;   // mixed with each anchor's id
    bool divide_by_k_plus_one = false; // fixed divisor even when fewer positives exist
    bool targets_in_denominator = true;
};

struct LossResult {
    double value = 0.0;
    Mat grad_features;     // d value / d features[i], taken at the unit vectors
    Mat grad_aug_features; // d value / d aug_features[i]
};

// Seeded uniform draw of up to k same-class batch indices (anchor excluded),
// returned sorted by sample id. Fewer than k candidates means all of them.
std::vector<int> sample_positives(const FeatureBatch& batch, int anchor, int k,
                                  std::uint64_t seed);

// k-positive contrastive loss. Every anchor v_i scores its own augmented view
// plus up to k sampled same-class features against a denominator built from
// {aug_i} + all other firsts (+ optional fixed extra negatives).
LossResult kcl_loss(const FeatureBatch& batch, const LossConfig& cfg,
                    const TargetSet* extra_negatives = nullptr);

// kcl_loss plus a lambda-weighted pull of each anchor toward its class's
// assigned target; the targets also join every denominator unless
// cfg.targets_in_denominator is off. Targets receive no gradient.
LossResult tsc_loss(const FeatureBatch& batch, const TargetSet& targets,
                    const Assignment& assignment, const LossConfig& cfg);

} // namespace tsc

#endif
