#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "osdal/classifier.hpp"
#include "osdal/numeric.hpp"
#include "osdal/rng.hpp"

namespace osdal {

using FeatureView = std::span<const double>;

// Per-sample outlier-exposure term: logsumexp(v) - mean(v). Minimized (at
// log C) exactly when all logits are equal, i.e. when the model predicts a
// uniform distribution.
inline double loss_oe(std::span<const double> logits) {
    if (logits.empty()) throw std::invalid_argument("loss_oe: empty logit vector");
    return logsumexp(logits) - mean(logits);
}

// Softmax cross-entropy against a one-hot target, computed as
// logsumexp(v) - v[target].
inline double cross_entropy(std::span<const double> logits, int target) {
    if (target < 0 || target >= static_cast<int>(logits.size()))
        throw std::invalid_argument("cross_entropy: target index out of range");
    return logsumexp(logits) - logits[target];
}

// Energy-exposure value (the ablation substitute for the OE term): squared
// hinges pushing InD energies below margin_in and OOD energies above
// margin_out. Either batch may be empty; its term is then zero.
inline double loss_ee(const std::vector<Vec>& logits_ind,
                      const std::vector<Vec>& logits_ood,
                      double margin_in, double margin_out) {
    if (!(margin_in < margin_out))
        throw std::invalid_argument("loss_ee: margin_in must be < margin_out");
    double value = 0.0;
    if (!logits_ind.empty()) {
        double s = 0.0;
        for (const Vec& v : logits_ind) {
            const double hinge = std::max(0.0, -logsumexp(v) - margin_in);
            s += hinge * hinge;
        }
        value += s / static_cast<double>(logits_ind.size());
    }
    if (!logits_ood.empty()) {
        double s = 0.0;
        for (const Vec& v : logits_ood) {
            const double hinge = std::max(0.0, margin_out + logsumexp(v));
            s += hinge * hinge;
        }
        value += s / static_cast<double>(logits_ood.size());
    }
    return value;
}

// ---------------------------------------------------------------------------
// Batched objective with gradients (manual backprop)
// ---------------------------------------------------------------------------

enum class OeMode { none, outlier_exposure, energy_exposure };

// Forward pass that keeps per-layer activations and the ReLU/dropout gate
// needed for the backward pass. gate[l][j] is the factor the backward delta
// is multiplied by: 0 for inactive or dropped units, 1/(1-p) for kept units
// under inverted dropout, 1 otherwise.
struct TrainTrace {
    std::vector<Vec> act;
    std::vector<Vec> gate;
    Vec logits;
};

inline void forward_train(const ClassifierModel& m, FeatureView x, double dropout_rate,
                          Rng* rng, TrainTrace& t) {
    if (static_cast<int>(x.size()) != m.input_dim)
        throw std::invalid_argument("forward: feature dimension mismatch");
    const int nh = m.num_hidden();
    t.act.resize(nh);
    t.gate.resize(nh);
    FeatureView cur = x;
    for (int l = 0; l < nh; ++l) {
        affine(m.layers[l], cur, t.act[l]);
        t.gate[l].assign(t.act[l].size(), 0.0);
        for (std::size_t j = 0; j < t.act[l].size(); ++j) {
            if (t.act[l][j] <= 0.0) {
                t.act[l][j] = 0.0;
                continue;
            }
            double g = 1.0;
            if (dropout_rate > 0.0)
                g = (rng->uniform() < dropout_rate) ? 0.0 : 1.0 / (1.0 - dropout_rate);
            t.gate[l][j] = g;
            t.act[l][j] *= g;
        }
    }
    affine(m.layers.back(), nh > 0 ? FeatureView(t.act.back()) : cur, t.logits);
}

inline std::vector<Layer> zero_grads(const ClassifierModel& m) {
    std::vector<Layer> g(m.layers.size());
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        g[l].in = m.layers[l].in;
        g[l].out = m.layers[l].out;
        g[l].w.assign(m.layers[l].w.size(), 0.0);
        g[l].b.assign(m.layers[l].b.size(), 0.0);
    }
    return g;
}

// Accumulates d(loss)/d(weights) for one sample given d(loss)/d(logits).
inline void backprop_accumulate(const ClassifierModel& m, FeatureView x,
                                const TrainTrace& t, const Vec& dlogits,
                                std::vector<Layer>& grads) {
    const int nh = m.num_hidden();
    Vec delta = dlogits;
    Vec prev_delta;
    for (int l = nh; l >= 0; --l) {
        const Layer& layer = m.layers[l];
        Layer& g = grads[l];
        const FeatureView input = l > 0 ? FeatureView(t.act[l - 1]) : x;
        if (l > 0) {
            prev_delta.assign(layer.in, 0.0);
            for (int r = 0; r < layer.out; ++r) {
                const double* wr = layer.w.data() + static_cast<std::size_t>(r) * layer.in;
                for (int c = 0; c < layer.in; ++c) prev_delta[c] += wr[c] * delta[r];
            }
        }
        for (int r = 0; r < layer.out; ++r) {
            double* gr = g.w.data() + static_cast<std::size_t>(r) * layer.in;
            const double d = delta[r];
            for (int c = 0; c < layer.in; ++c) gr[c] += d * input[c];
            g.b[r] += d;
        }
        if (l > 0) {
            for (int c = 0; c < layer.in; ++c) prev_delta[c] *= t.gate[l - 1][c];
            delta = prev_delta;
        }
    }
}

struct Objective {
    double value = 0.0;
    std::vector<Layer> grads;
};

struct LossParams {
    OeMode mode = OeMode::outlier_exposure;
    double lambda_oe = 0.5;
    double ee_margin_in = -7.0;
    double ee_margin_out = -1.0;
    double dropout_rate = 0.0; // training dropout; gradient checks use 0
};

// Combined per-batch objective:
//   outlier_exposure: mean CE over the InD part + lambda * mean OE over the
//                     OOD part (the OOD term is skipped entirely when that
//                     part is empty or lambda is 0, so a pure-InD batch is
//                     bit-identical to a plain cross-entropy loss);
//   energy_exposure:  mean CE + lambda * energy-hinge penalty on both parts;
//   none:             mean CE only.
// Reduction order is fixed: InD samples in order, then OOD samples in order.
inline Objective objective_grad(const ClassifierModel& m,
                                std::span<const FeatureView> ind_x,
                                std::span<const int> ind_y,
                                std::span<const FeatureView> ood_x,
                                const LossParams& p,
                                Rng* rng = nullptr) {
    if (ind_x.size() != ind_y.size())
        throw std::invalid_argument("objective_grad: InD batch/target size mismatch");
    const bool use_ood = p.mode != OeMode::none && p.lambda_oe != 0.0 && !ood_x.empty();
    if (ind_x.empty() && !use_ood)
        throw std::invalid_argument("objective_grad: both sub-batches empty");

    Objective obj;
    obj.grads = zero_grads(m);
    TrainTrace trace;
    Vec probs;
    Vec dlogits;
    const int n_out = m.output_dim();
    const double n_ind = static_cast<double>(ind_x.size());
    const double n_ood = static_cast<double>(ood_x.size());

    double ce_sum = 0.0;
    double ee_in_sum = 0.0;
    for (std::size_t i = 0; i < ind_x.size(); ++i) {
        forward_train(m, ind_x[i], p.dropout_rate, rng, trace);
        ce_sum += cross_entropy(trace.logits, ind_y[i]);
        probs = trace.logits;
        softmax_inplace(probs);
        dlogits.assign(n_out, 0.0);
        for (int k = 0; k < n_out; ++k) dlogits[k] = probs[k] / n_ind;
        dlogits[ind_y[i]] -= 1.0 / n_ind;
        if (p.mode == OeMode::energy_exposure && p.lambda_oe != 0.0) {
            const double hinge = std::max(0.0, -logsumexp(trace.logits) - p.ee_margin_in);
            ee_in_sum += hinge * hinge;
            if (hinge > 0.0)
                for (int k = 0; k < n_out; ++k)
                    dlogits[k] -= p.lambda_oe * 2.0 * hinge * probs[k] / n_ind;
        }
        backprop_accumulate(m, ind_x[i], trace, dlogits, obj.grads);
    }
    if (!ind_x.empty()) {
        obj.value = ce_sum / n_ind;
        if (p.mode == OeMode::energy_exposure && p.lambda_oe != 0.0)
            obj.value += p.lambda_oe * (ee_in_sum / n_ind);
    }

    if (use_ood && p.mode == OeMode::outlier_exposure) {
        double oe_sum = 0.0;
        for (const FeatureView& x : ood_x) {
            forward_train(m, x, p.dropout_rate, rng, trace);
            oe_sum += loss_oe(trace.logits);
            probs = trace.logits;
            softmax_inplace(probs);
            dlogits.assign(n_out, 0.0);
            const double scale = p.lambda_oe / n_ood;
            for (int k = 0; k < n_out; ++k)
                dlogits[k] = scale * (probs[k] - 1.0 / n_out);
            backprop_accumulate(m, x, trace, dlogits, obj.grads);
        }
        obj.value += p.lambda_oe * (oe_sum / n_ood);
    } else if (use_ood && p.mode == OeMode::energy_exposure) {
        double hinge_sum = 0.0;
        for (const FeatureView& x : ood_x) {
            forward_train(m, x, p.dropout_rate, rng, trace);
            const double hinge = std::max(0.0, p.ee_margin_out + logsumexp(trace.logits));
            hinge_sum += hinge * hinge;
            if (hinge > 0.0) {
                probs = trace.logits;
                softmax_inplace(probs);
                dlogits.assign(n_out, 0.0);
                for (int k = 0; k < n_out; ++k)
                    dlogits[k] = p.lambda_oe * 2.0 * hinge * probs[k] / n_ood;
                backprop_accumulate(m, x, trace, dlogits, obj.grads);
            }
        }
        obj.value += p.lambda_oe * (hinge_sum / n_ood);
    }
    return obj;
}

// Eq.-style combined loss: CE on the labeled InD part plus a weighted OE term
// on the labeled OOD part.
inline Objective loss_combined(const ClassifierModel& m,
                               std::span<const FeatureView> ind_x,
                               std::span<const int> ind_y,
                               std::span<const FeatureView> ood_x,
                               double lambda_oe) {
    LossParams p;
    p.mode = OeMode::outlier_exposure;
    p.lambda_oe = lambda_oe;
    return objective_grad(m, ind_x, ind_y, ood_x, p);
}

} // namespace osdal
