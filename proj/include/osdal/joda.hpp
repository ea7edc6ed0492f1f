#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <vector>

#include "osdal/classifier.hpp"
#include "osdal/datamodel.hpp"
#include "osdal/numeric.hpp"

namespace osdal {

// Energy score E(x) = -logsumexp(f(x)); low for confident known-class
// predictions, driven high on OOD data by the outlier-exposure term.
inline double energy_score(std::span<const double> logits) {
    if (logits.empty()) throw std::invalid_argument("energy_score: empty logits");
    return -logsumexp(logits);
}

struct EnergyThreshold {
    double t_opt = std::numeric_limits<double>::infinity();
    double j = 0.0;       // achieved Youden statistic, TPR - FPR
    bool skipped = true;  // no filtering (cycle 1, empty L_O, or uninformative scores)
};

// ROC threshold over labeled energies. OOD is the positive class and E > t
// predicts OOD, so TPR(t) counts OOD energies above t and FPR(t) counts
// InD energies above t. Candidate cuts are the midpoints between consecutive
// distinct pooled values plus the +/-inf sentinels; every achievable
// (TPR, FPR) point is visited. Ties on J resolve to the smallest threshold
// (the cut that filters the most). A best J of zero means the scores carry
// no signal; filtering is then skipped.
inline EnergyThreshold youden_threshold(std::span<const double> ind_energies,
                                        std::span<const double> ood_energies) {
    EnergyThreshold result;
    if (ind_energies.empty() || ood_energies.empty()) return result;

    std::vector<double> pooled(ind_energies.begin(), ind_energies.end());
    pooled.insert(pooled.end(), ood_energies.begin(), ood_energies.end());
    std::sort(pooled.begin(), pooled.end());
    pooled.erase(std::unique(pooled.begin(), pooled.end()), pooled.end());

    std::vector<double> candidates;
    candidates.push_back(std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i + 1 < pooled.size(); ++i)
        candidates.push_back(0.5 * (pooled[i] + pooled[i + 1]));
    candidates.push_back(-std::numeric_limits<double>::infinity());

    const double n_ood = static_cast<double>(ood_energies.size());
    const double n_ind = static_cast<double>(ind_energies.size());
    double best_j = -1.0;
    double best_t = std::numeric_limits<double>::infinity();
    for (double t : candidates) {
        std::size_t tp = 0, fp = 0;
        for (double e : ood_energies)
            if (e > t) ++tp;
        for (double e : ind_energies)
            if (e > t) ++fp;
        const double j = static_cast<double>(tp) / n_ood - static_cast<double>(fp) / n_ind;
        if (j > best_j || (j == best_j && t < best_t)) {
            best_j = j;
            best_t = t;
        }
    }
    if (best_j <= 0.0) return result; // uninformative; keep skipped defaults
    result.t_opt = best_t;
    result.j = best_j;
    result.skipped = false;
    return result;
}

struct FilterResult {
    std::vector<int> kept;     // X_ID: candidates for selection
    std::vector<int> rejected; // X_OOD
    bool degenerate_all_pass = false; // threshold rejected everything; fell back
};

// Partitions ids by energy against the threshold: E < t_opt passes. A skipped
// threshold passes everything. If the cut would reject the whole pool, the
// cycle falls back to no filtering and flags the condition.
inline FilterResult filter_unlabeled(std::span<const int> ids,
                                     std::span<const double> energies,
                                     const EnergyThreshold& t) {
    if (ids.size() != energies.size())
        throw std::invalid_argument("filter_unlabeled: ids/energies size mismatch");
    FilterResult r;
    if (t.skipped) {
        r.kept.assign(ids.begin(), ids.end());
        return r;
    }
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (energies[i] < t.t_opt)
            r.kept.push_back(ids[i]);
        else
            r.rejected.push_back(ids[i]);
    }
    if (r.kept.empty() && !ids.empty()) {
        r.kept.assign(ids.begin(), ids.end());
        r.rejected.clear();
        r.degenerate_all_pass = true;
    }
    return r;
}

// Per-candidate scores of the selection phase.
struct SisomeScores {
    double energy = 0.0;   // E(x)
    double quotient = 0.0; // Q(x) = d_in / d_out
    double m_hat = 0.0;    // min(m_avg,1)*E + max(1-m_avg,0)*Q
    int predicted_class = -1;
};

// Cycle-level context for SISOMe scoring: class centroids in the penultimate
// embedding, the labeled-pool separability value m_avg, the spread of labeled
// scores, and the per-class balance offsets b_f. All statistics are computed
// over L_I (the cleanly labeled InD pool), with the true class used for the
// labeled distance ratios.
class SisomeContext {
public:
    static SisomeContext build(const ClassifierModel& model, const Dataset& data,
                               const PoolState& pool) {
        SisomeContext ctx;
        ctx.model_ = model; // own a copy; contexts outlive cycle-local models

        std::map<int, Vec> sums;
        std::map<int, int> counts;
        std::vector<Vec> embeddings;
        embeddings.reserve(pool.labeled_ind.size());
        for (const LabeledEntry& e : pool.labeled_ind) {
            Vec z = embed(model, data.by_id(e.sample_id).features);
            auto [it, fresh] = sums.try_emplace(e.class_label, Vec(z.size(), 0.0));
            for (std::size_t i = 0; i < z.size(); ++i) it->second[i] += z[i];
            counts[e.class_label] += 1;
            embeddings.push_back(std::move(z));
        }
        for (auto& [label, sum] : sums) {
            for (double& v : sum) v /= static_cast<double>(counts[label]);
            ctx.centroid_labels_.push_back(label);
            ctx.centroids_.push_back(std::move(sum));
        }
        // Fewer than two centroids: Q is undefined, scores fall back to E.
        ctx.energy_only_ = ctx.centroids_.size() < 2;

        // Labeled-pool statistics: ratio d_in/d_out with the true class as
        // the inner one, then m_hat over the same pool.
        std::vector<double> ratios;
        std::vector<double> labeled_m_hat;
        std::vector<int> labeled_pred;
        ratios.reserve(pool.labeled_ind.size());
        if (!ctx.energy_only_) {
            for (std::size_t i = 0; i < pool.labeled_ind.size(); ++i) {
                const LabeledEntry& e = pool.labeled_ind[i];
                ratios.push_back(ctx.distance_ratio(embeddings[i], e.class_label));
            }
            double finite_sum = 0.0;
            std::size_t finite_n = 0;
            for (double r : ratios)
                if (std::isfinite(r)) {
                    finite_sum += r;
                    ++finite_n;
                }
            ctx.m_avg_ = finite_n > 0 ? finite_sum / static_cast<double>(finite_n)
                                      : std::numeric_limits<double>::infinity();
        }

        for (const LabeledEntry& e : pool.labeled_ind) {
            const Sample& s = data.by_id(e.sample_id);
            const Vec logits = forward_logits(model, s.features);
            labeled_pred.push_back(model.class_labels[argmax(logits)]);
            if (!ctx.energy_only_) {
                const double en = energy_score(logits);
                const std::size_t i = labeled_pred.size() - 1;
                labeled_m_hat.push_back(ctx.combine(en, ratios[i]));
            }
        }
        if (!labeled_m_hat.empty()) {
            std::vector<double> finite;
            for (double v : labeled_m_hat)
                if (std::isfinite(v)) finite.push_back(v);
            ctx.sigma_ = finite.empty() ? 0.0 : stddev_pop(finite);
        }

        // Pseudo-class counts over the labeled pool drive the balance factor
        // b_f(c) = -sigma * (n(c)*C/|L| - 1).
        const double num_classes = static_cast<double>(model.output_dim());
        const double pool_size = static_cast<double>(pool.labeled_ind.size());
        std::map<int, int> pseudo_counts;
        for (int c : model.class_labels) pseudo_counts[c] = 0;
        for (int c : labeled_pred) pseudo_counts[c] += 1;
        for (const auto& [label, count] : pseudo_counts)
            ctx.balance_[label] =
                -ctx.sigma_ * (static_cast<double>(count) * num_classes / pool_size - 1.0);
        return ctx;
    }

    SisomeScores score(std::span<const double> x) const {
        const Vec logits = forward_logits(model_, x);
        SisomeScores s;
        s.predicted_class = model_.class_labels[argmax(logits)];
        s.energy = energy_score(logits);
        if (energy_only_) {
            s.quotient = 0.0;
            s.m_hat = s.energy;
            return s;
        }
        const Vec z = embed(model_, x);
        s.quotient = distance_ratio(z, s.predicted_class);
        s.m_hat = combine(s.energy, s.quotient);
        return s;
    }

    // b_f for a predicted class; zero for labels without a balance entry.
    double balance_offset(int predicted_class) const {
        auto it = balance_.find(predicted_class);
        return it == balance_.end() ? 0.0 : it->second;
    }

    double balanced_score(const SisomeScores& s) const {
        return s.m_hat + balance_offset(s.predicted_class);
    }

    double m_avg() const { return m_avg_; }
    double sigma() const { return sigma_; }
    bool energy_only() const { return energy_only_; }

private:
    // d_in/d_out against the centroid set; +inf when d_out is zero (maximal
    // score), 0 when the point sits exactly on its own centroid too.
    double distance_ratio(const Vec& z, int inner_label) const {
        double d_in = 0.0;
        double d_out = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < centroids_.size(); ++c) {
            const double d = euclidean_distance(z, centroids_[c]);
            if (centroid_labels_[c] == inner_label)
                d_in = d;
            else
                d_out = std::min(d_out, d);
        }
        if (d_out == 0.0)
            return d_in == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
        return d_in / d_out;
    }

    // Eq-style saturating combination; the Q term is dropped (not multiplied)
    // when its coefficient is zero so an infinite Q cannot poison the score.
    double combine(double energy, double quotient) const {
        const double a = std::min(m_avg_, 1.0);
        const double b = std::max(1.0 - m_avg_, 0.0);
        double v = a * energy;
        if (b > 0.0) v += b * quotient;
        return v;
    }

    ClassifierModel model_;
    std::vector<int> centroid_labels_;
    std::vector<Vec> centroids_;
    std::map<int, double> balance_;
    double m_avg_ = std::numeric_limits<double>::infinity();
    double sigma_ = 0.0;
    bool energy_only_ = false;
};

// One-shot scoring of a single candidate (test and inspection convenience;
// cycle code builds the context once and reuses it).
inline SisomeScores sisome_score(const ClassifierModel& model, const Dataset& data,
                                 const PoolState& pool, std::span<const double> x) {
    return SisomeContext::build(model, data, pool).score(x);
}

// Top-q ids by score, ties resolved toward the smaller id. Returns all
// candidates when q exceeds the pool (the caller reports the shortfall).
inline std::vector<int> select_top_q(std::span<const int> ids,
                                     std::span<const double> scores, int q) {
    if (q < 1) throw std::invalid_argument("select_top_q: q < 1");
    if (ids.empty()) throw std::invalid_argument("select_top_q: empty candidate set");
    if (ids.size() != scores.size())
        throw std::invalid_argument("select_top_q: ids/scores size mismatch");
    std::vector<std::size_t> order(ids.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return ids[a] < ids[b];
    });
    const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(q), ids.size());
    std::vector<int> out(take);
    for (std::size_t i = 0; i < take; ++i) out[i] = ids[order[i]];
    return out;
}

} // namespace osdal
