#include "tsc/losses.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <unordered_set>

#include "tsc/errors.hpp"
#include "tsc/rng.hpp"

namespace tsc {

namespace {

std::string at(const char* what, int i) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%s (sample %d)", what, i);
    return buf;
}

void validate_batch(const FeatureBatch& batch) {
    const int n = batch.size();
    if (n == 0) throw ValidationError("loss: empty batch");
    if (static_cast<int>(batch.aug_features.size()) != n)
        throw ValidationError("loss: features/aug_features count mismatch");
    if (static_cast<int>(batch.labels.size()) != n)
        throw ValidationError("loss: labels count mismatch");
    if (!batch.ids.empty() && static_cast<int>(batch.ids.size()) != n)
        throw ValidationError("loss: ids count mismatch");
    const int d = batch.dim();
    if (d == 0) throw ValidationError("loss: zero-dimensional features");
    for (int i = 0; i < n; ++i) {
        if (static_cast<int>(batch.features[i].size()) != d ||
            static_cast<int>(batch.aug_features[i].size()) != d)
            throw ValidationError(at("loss: inconsistent feature dimension", i));
        if (!is_unit(batch.features[i], 1e-9) || !is_unit(batch.aug_features[i], 1e-9))
            throw ValidationError(at("loss: feature not unit length", i));
        if (batch.labels[i] < 0)
            throw ValidationError(at("loss: negative label", i));
    }
    if (!batch.ids.empty()) {
        std::unordered_set<std::uint64_t> seen(batch.ids.begin(), batch.ids.end());
        if (static_cast<int>(seen.size()) != n)
            throw ValidationError("loss: duplicate sample ids");
    }
}

void validate_config(const LossConfig& cfg) {
    if (cfg.k < 1) throw ValidationError("loss: k must be at least 1");
    if (cfg.lambda < 0.0) throw ValidationError("loss: lambda must be non-negative");
    if (!(cfg.tau > 0.0)) throw ValidationError("loss: tau must be positive");
}

// Shared evaluator. The two public losses differ only in which fixed points
// join the denominator and whether a pull term is active, so both route here;
// with pull disabled and identical fixed points the results are bit-equal.
//
// Per anchor i with positives P_i = {aug_i} + sampled same-class features and
// denominator W_i = {aug_i} + other firsts (+ fixed points when present):
//   L_i = -(1/div) sum_{p in P_i} log( exp(<v_i,p>/tau) / D_i )
//         - lambda * log( exp(<v_i,c_i>/tau) / D_i )
//   D_i = sum_{w in W_i} exp(<v_i,w>/tau)
// and the reported value is the mean over anchors. div is |P_i| by default or
// the fixed k+1. The pull target c_i never joins P_i and gets no gradient.
LossResult evaluate(const FeatureBatch& batch, const LossConfig& cfg,
                    const Mat* fixed_points, const std::vector<int>* anchor_to_fixed) {
    validate_batch(batch);
    validate_config(cfg);
    const int n = batch.size();
    const int d = batch.dim();
    const int m = fixed_points ? static_cast<int>(fixed_points->size()) : 0;
    if (fixed_points) {
        for (const Vec& t : *fixed_points)
            if (static_cast<int>(t.size()) != d)
                throw ValidationError("loss: fixed negative dimension mismatch");
    }

    LossResult out;
    out.grad_features.assign(n, Vec(d, 0.0));
    out.grad_aug_features.assign(n, Vec(d, 0.0));

    const double inv_tau = 1.0 / cfg.tau;
    std::vector<double> sims;   // one entry per denominator member
    std::vector<double> alphas; // softmax weights over the same members

    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        const Vec& v = batch.features[i];

        // Denominator members in a fixed order: own augmented view, then the
        // other anchors' firsts, then any fixed points.
        sims.clear();
        sims.push_back(dot(v, batch.aug_features[i]) * inv_tau);
        for (int j = 0; j < n; ++j)
            if (j != i) sims.push_back(dot(v, batch.features[j]) * inv_tau);
        const bool with_fixed = m > 0 && cfg.targets_in_denominator;
        if (with_fixed)
            for (int t = 0; t < m; ++t) sims.push_back(dot(v, (*fixed_points)[t]) * inv_tau);

        const double log_d = log_sum_exp(sims);
        alphas.resize(sims.size());
        for (std::size_t w = 0; w < sims.size(); ++w)
            alphas[w] = std::exp(sims[w] - log_d);

        const std::vector<int> pos = sample_positives(batch, i, cfg.k, cfg.positive_sampling_seed);
        const int pos_count = 1 + static_cast<int>(pos.size()); // aug view counts
        const double div = cfg.divide_by_k_plus_one ? cfg.k + 1.0 : pos_count;

        double lam = 0.0;
        const Vec* pull = nullptr;
        if (anchor_to_fixed && cfg.lambda > 0.0) {
            pull = &(*fixed_points)[(*anchor_to_fixed)[i]];
            lam = cfg.lambda;
        }

        // Loss value.
        double sum_pos = sims[0]; // aug view similarity
        for (int j : pos) sum_pos += dot(v, batch.features[j]) * inv_tau;
        double li = -(sum_pos - pos_count * log_d) / div;
        if (pull) li -= lam * (dot(v, *pull) * inv_tau - log_d);
        total += li;

        // log D appears pos_count/div + lam times in L_i.
        const double beta = pos_count / div + lam;
        const double coef = inv_tau / n;

        // Anchor gradient: -(coef)[ (1/div) sum_pos_vectors + lam c - beta sum alpha_w w ].
        Vec& gv = out.grad_features[i];
        axpy(-coef / div, batch.aug_features[i], gv);
        for (int j : pos) axpy(-coef / div, batch.features[j], gv);
        if (pull) axpy(-coef * lam, *pull, gv);
        std::size_t w = 0;
        axpy(coef * beta * alphas[w], batch.aug_features[i], gv);
        ++w;
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            axpy(coef * beta * alphas[w], batch.features[j], gv);
            ++w;
        }
        if (with_fixed) {
            for (int t = 0; t < m; ++t) {
                axpy(coef * beta * alphas[w], (*fixed_points)[t], gv);
                ++w;
            }
        }

        // Member gradients. Denominator contribution: +coef*beta*alpha_w v for
        // every batch-owned member; positives additionally get -coef/div v.
        axpy(coef * (beta * alphas[0] - 1.0 / div), v, out.grad_aug_features[i]);
        w = 1;
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            axpy(coef * beta * alphas[w], v, out.grad_features[j]);
            ++w;
        }
        for (int j : pos) axpy(-coef / div, v, out.grad_features[j]);
    }

    out.value = total / n;
    if (!std::isfinite(out.value))
        throw OptimizationError("loss: value is not finite");
    return out;
}

} // namespace

std::vector<int> sample_positives(const FeatureBatch& batch, int anchor, int k,
                                  std::uint64_t seed) {
    const int n = batch.size();
    if (anchor < 0 || anchor >= n) throw ValidationError("sample_positives: anchor out of range");
    if (k < 1) throw ValidationError("sample_positives: k must be at least 1");

    // Candidates keyed by id so the draw ignores batch order.
    std::vector<std::pair<std::uint64_t, int>> cand;
    for (int j = 0; j < n; ++j)
        if (j != anchor && batch.labels[j] == batch.labels[anchor])
            cand.emplace_back(batch.id(j), j);
    std::sort(cand.begin(), cand.end());

    std::vector<int> picked;
    if (cand.empty()) return picked;
    if (static_cast<int>(cand.size()) <= k) {
        for (const auto& c : cand) picked.push_back(c.second);
        return picked;
    }
    Rng rng(Rng::mix2(seed, batch.id(anchor)));
    std::vector<int> slots =
        rng.sample_without_replacement(static_cast<int>(cand.size()), k);
    std::sort(slots.begin(), slots.end()); // id order, like the full-set case
    for (int s : slots) picked.push_back(cand[s].second);
    return picked;
}

LossResult kcl_loss(const FeatureBatch& batch, const LossConfig& cfg,
                    const TargetSet* extra_negatives) {
    const Mat* fixed = extra_negatives ? &extra_negatives->points : nullptr;
    LossConfig local = cfg;
    local.targets_in_denominator = true; // extra negatives exist only to join it
    return evaluate(batch, local, fixed, nullptr);
}

LossResult tsc_loss(const FeatureBatch& batch, const TargetSet& targets,
                    const Assignment& assignment, const LossConfig& cfg) {
    const int c = targets.num_classes();
    if (static_cast<int>(assignment.sigma.size()) != c)
        throw ValidationError("tsc_loss: assignment size does not match target count");
    std::vector<int> anchor_to_fixed(batch.size());
    for (int i = 0; i < batch.size(); ++i) {
        const int y = batch.labels[i];
        if (y >= c)
            throw ContractError("tsc_loss: batch label has no assigned target");
        const int t = assignment.sigma[y];
        if (t < 0 || t >= c)
            throw ValidationError("tsc_loss: assignment entry out of range");
        anchor_to_fixed[i] = t;
    }
    return evaluate(batch, cfg, &targets.points, &anchor_to_fixed);
}

} // namespace tsc
