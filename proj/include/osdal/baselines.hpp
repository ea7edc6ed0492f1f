#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "osdal/classifier.hpp"
#include "osdal/datamodel.hpp"
#include "osdal/joda.hpp"
#include "osdal/rng.hpp"

namespace osdal {

enum class SelectorKind {
    random,
    entropy,
    energy_only,
    kcenter,
    joda,
    joda_no_oe,
    joda_ee,
    joda_no_filter,
    joda_unbalanced,
};

struct SelectorSpec {
    SelectorKind kind = SelectorKind::joda;
    int mc_passes = 5;        // entropy baseline
    double mc_dropout = 0.2;  // entropy baseline
    double ee_margin_in = -7.0;
    double ee_margin_out = -1.0;
};

inline const char* to_string(SelectorKind k) {
    switch (k) {
        case SelectorKind::random: return "random";
        case SelectorKind::entropy: return "entropy";
        case SelectorKind::energy_only: return "energy_only";
        case SelectorKind::kcenter: return "kcenter";
        case SelectorKind::joda: return "joda";
        case SelectorKind::joda_no_oe: return "joda_no_oe";
        case SelectorKind::joda_ee: return "joda_ee";
        case SelectorKind::joda_no_filter: return "joda_no_filter";
        case SelectorKind::joda_unbalanced: return "joda_unbalanced";
    }
    return "?";
}

inline std::optional<SelectorKind> parse_selector_kind(const std::string& name) {
    for (SelectorKind k :
         {SelectorKind::random, SelectorKind::entropy, SelectorKind::energy_only,
          SelectorKind::kcenter, SelectorKind::joda, SelectorKind::joda_no_oe,
          SelectorKind::joda_ee, SelectorKind::joda_no_filter, SelectorKind::joda_unbalanced})
        if (name == to_string(k)) return k;
    return std::nullopt;
}

inline bool is_joda_variant(SelectorKind k) {
    switch (k) {
        case SelectorKind::joda:
        case SelectorKind::joda_no_oe:
        case SelectorKind::joda_ee:
        case SelectorKind::joda_no_filter:
        case SelectorKind::joda_unbalanced:
            return true;
        default:
            return false;
    }
}

// Uniform draw without replacement (partial Fisher-Yates).
inline std::vector<int> select_random(std::span<const int> pool, int q, Rng& rng) {
    if (q < 1) throw std::invalid_argument("select_random: q < 1");
    if (pool.empty()) throw std::invalid_argument("select_random: empty pool");
    std::vector<int> ids(pool.begin(), pool.end());
    const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(q), ids.size());
    for (std::size_t i = 0; i < take; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(ids.size() - i));
        std::swap(ids[i], ids[j]);
    }
    ids.resize(take);
    return ids;
}

// Shannon entropy of the mean softmax over `passes` forward passes; a single
// pass is the plain deterministic softmax entropy. Higher is selected first.
inline std::vector<int> select_entropy(const ClassifierModel& model, const Dataset& data,
                                       std::span<const int> pool, int q, int passes,
                                       double dropout_rate, Rng& rng) {
    if (passes < 1) throw std::invalid_argument("select_entropy: passes < 1");
    if (pool.empty()) throw std::invalid_argument("select_entropy: empty pool");
    std::vector<double> scores(pool.size());
    Vec mean_probs;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        const Sample& s = data.by_id(pool[i]);
        mean_probs.assign(model.output_dim(), 0.0);
        for (int p = 0; p < passes; ++p) {
            Vec probs = passes > 1
                            ? forward_logits_stochastic(model, s.features, dropout_rate, rng)
                            : forward_logits(model, s.features);
            softmax_inplace(probs);
            for (std::size_t k = 0; k < probs.size(); ++k) mean_probs[k] += probs[k];
        }
        double h = 0.0;
        for (double p : mean_probs) {
            p /= passes;
            if (p > 0.0) h -= p * std::log(p);
        }
        scores[i] = h;
    }
    return select_top_q(pool, scores, q);
}

// Pure energy-based selection: top-q by E(x), no filtering, no feature-space
// term (the selection-phase ablation).
inline std::vector<int> select_energy_only(const ClassifierModel& model, const Dataset& data,
                                           std::span<const int> pool, int q) {
    if (pool.empty()) throw std::invalid_argument("select_energy_only: empty pool");
    std::vector<double> scores(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i)
        scores[i] = energy_score(forward_logits(model, data.by_id(pool[i]).features));
    return select_top_q(pool, scores, q);
}

// Greedy k-center in the embedding space, seeded with the labeled pool: each
// pick is the candidate farthest from everything chosen or labeled so far.
// Ties resolve toward the smaller id; with no labeled seeds the first pick is
// the smallest candidate id.
inline std::vector<int> select_kcenter(const ClassifierModel& model, const Dataset& data,
                                       std::span<const int> pool,
                                       std::span<const int> labeled, int q) {
    if (q < 1) throw std::invalid_argument("select_kcenter: q < 1");
    if (pool.empty()) throw std::invalid_argument("select_kcenter: empty pool");
    std::vector<Vec> emb(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i)
        emb[i] = embed(model, data.by_id(pool[i]).features);

    std::vector<double> min_dist(pool.size(), std::numeric_limits<double>::infinity());
    for (int id : labeled) {
        const Vec z = embed(model, data.by_id(id).features);
        for (std::size_t i = 0; i < pool.size(); ++i)
            min_dist[i] = std::min(min_dist[i], euclidean_distance(emb[i], z));
    }

    const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(q), pool.size());
    std::vector<int> chosen;
    std::vector<bool> used(pool.size(), false);
    if (labeled.empty()) {
        std::size_t first = 0;
        for (std::size_t i = 1; i < pool.size(); ++i)
            if (pool[i] < pool[first]) first = i;
        used[first] = true;
        chosen.push_back(pool[first]);
        for (std::size_t i = 0; i < pool.size(); ++i)
            if (!used[i])
                min_dist[i] = std::min(min_dist[i], euclidean_distance(emb[i], emb[first]));
    }
    while (chosen.size() < take) {
        std::size_t best = pool.size();
        for (std::size_t i = 0; i < pool.size(); ++i) {
            if (used[i]) continue;
            if (best == pool.size() || min_dist[i] > min_dist[best] ||
                (min_dist[i] == min_dist[best] && pool[i] < pool[best]))
                best = i;
        }
        used[best] = true;
        chosen.push_back(pool[best]);
        for (std::size_t i = 0; i < pool.size(); ++i)
            if (!used[i])
                min_dist[i] = std::min(min_dist[i], euclidean_distance(emb[i], emb[best]));
    }
    return chosen;
}

} // namespace osdal
