#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "osdal/datamodel.hpp"
#include "osdal/loss.hpp"

namespace osdal {

struct TrainConfig {
    int epochs = 60;
    int batch_size = 32;
    double learning_rate = 0.05;
    double momentum = 0.9;
    double weight_decay = 0.0;
    double lambda_oe = 0.5;
    std::uint64_t seed = 1;
    double validation_fraction = 0.0; // 0 disables checkpoint selection
    std::vector<int> hidden = {32};
    double dropout = 0.0;
    OeMode oe_mode = OeMode::outlier_exposure;
    double ee_margin_in = -7.0;
    double ee_margin_out = -1.0;
};

namespace detail {

inline double accuracy_on(const ClassifierModel& m,
                          const std::vector<FeatureView>& xs,
                          const std::vector<int>& ys,
                          const std::vector<std::size_t>& idx) {
    if (idx.empty()) return 0.0;
    std::size_t correct = 0;
    for (std::size_t i : idx)
        if (static_cast<int>(argmax(forward_logits(m, xs[i]))) == ys[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(idx.size());
}

} // namespace detail

// Trains a freshly initialized model on the current pool by minibatch SGD.
//
// The run is a pure function of (pool contents, config): one mt19937_64
// stream seeded with config.seed supplies, in order, the weight init, the
// optional validation split, and one shuffle of the InD order (plus one of
// the OOD order when active) per epoch. L_D samples never enter the
// objective. When L_O is nonempty and the OE/EE term is active, every batch
// mixes both pools proportionally to their sizes with at least one sample
// from each; otherwise batches are plain InD slices and the objective
// collapses to cross-entropy.
inline ClassifierModel train_cycle(const Dataset& data, const PoolState& pool,
                                   const TrainConfig& cfg) {
    if (pool.labeled_ind.empty())
        throw std::invalid_argument("train_cycle: empty InD pool");
    if (cfg.epochs < 1) throw std::invalid_argument("train_cycle: epochs < 1");
    if (cfg.batch_size < 1) throw std::invalid_argument("train_cycle: batch_size < 1");
    if (cfg.lambda_oe < 0.0) throw std::invalid_argument("train_cycle: lambda_oe < 0");

    std::vector<FeatureView> ind_x;
    std::vector<int> ind_y;
    ind_x.reserve(pool.labeled_ind.size());
    for (const LabeledEntry& e : pool.labeled_ind) {
        const Sample& s = data.by_id(e.sample_id);
        ind_x.emplace_back(s.features);
        int out_idx = -1;
        for (std::size_t k = 0; k < pool.registry.known_classes.size(); ++k)
            if (pool.registry.known_classes[k] == e.class_label) {
                out_idx = static_cast<int>(k);
                break;
            }
        if (out_idx < 0)
            throw ProtocolError("train_cycle: L_I sample with unknown class label");
        ind_y.push_back(out_idx);
    }
    std::vector<FeatureView> ood_x;
    if (cfg.oe_mode != OeMode::none)
        for (int id : pool.labeled_ood) ood_x.emplace_back(data.by_id(id).features);

    Rng rng(cfg.seed);
    ClassifierModel model =
        init_model(data.dim, cfg.hidden, pool.registry.known_classes, cfg.dropout, rng);

    // Optional validation split for checkpoint selection.
    std::vector<std::size_t> train_idx(ind_x.size());
    std::iota(train_idx.begin(), train_idx.end(), 0);
    std::vector<std::size_t> val_idx;
    if (cfg.validation_fraction > 0.0 && ind_x.size() >= 2) {
        rng.shuffle(train_idx);
        std::size_t k = static_cast<std::size_t>(
            std::lround(cfg.validation_fraction * static_cast<double>(ind_x.size())));
        k = std::clamp<std::size_t>(k, 1, ind_x.size() - 1);
        val_idx.assign(train_idx.begin(), train_idx.begin() + k);
        train_idx.erase(train_idx.begin(), train_idx.begin() + k);
    }

    const std::size_t n = train_idx.size();
    const std::size_t m = ood_x.size();
    std::size_t per_batch_ood = 0;
    std::size_t per_batch_ind = static_cast<std::size_t>(cfg.batch_size);
    if (m > 0 && cfg.lambda_oe != 0.0) {
        const double share = static_cast<double>(cfg.batch_size) * m / static_cast<double>(n + m);
        per_batch_ood = std::clamp<std::size_t>(
            static_cast<std::size_t>(std::lround(share)), 1,
            std::max<std::size_t>(1, static_cast<std::size_t>(cfg.batch_size) - 1));
        per_batch_ind = std::max<std::size_t>(
            1, static_cast<std::size_t>(cfg.batch_size) - per_batch_ood);
    }

    std::vector<Layer> velocity = zero_grads(model);
    LossParams lp;
    lp.mode = cfg.oe_mode;
    lp.lambda_oe = cfg.lambda_oe;
    lp.ee_margin_in = cfg.ee_margin_in;
    lp.ee_margin_out = cfg.ee_margin_out;
    lp.dropout_rate = cfg.dropout;

    std::vector<std::size_t> ood_order(m);
    std::iota(ood_order.begin(), ood_order.end(), 0);
    std::vector<FeatureView> bx, bo;
    std::vector<int> by;

    ClassifierModel best = model;
    double best_acc = -1.0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(train_idx);
        if (per_batch_ood > 0) rng.shuffle(ood_order);
        std::size_t ood_cursor = 0;
        for (std::size_t off = 0; off < n; off += per_batch_ind) {
            const std::size_t end = std::min(n, off + per_batch_ind);
            bx.clear();
            by.clear();
            bo.clear();
            for (std::size_t i = off; i < end; ++i) {
                bx.push_back(ind_x[train_idx[i]]);
                by.push_back(ind_y[train_idx[i]]);
            }
            for (std::size_t j = 0; j < per_batch_ood; ++j)
                bo.push_back(ood_x[ood_order[(ood_cursor + j) % m]]);
            ood_cursor += per_batch_ood;

            const Objective obj = objective_grad(model, bx, by, bo, lp, &rng);
            for (std::size_t l = 0; l < model.layers.size(); ++l) {
                Layer& layer = model.layers[l];
                Layer& v = velocity[l];
                const Layer& g = obj.grads[l];
                for (std::size_t i = 0; i < layer.w.size(); ++i) {
                    v.w[i] = cfg.momentum * v.w[i] -
                             cfg.learning_rate * (g.w[i] + cfg.weight_decay * layer.w[i]);
                    layer.w[i] += v.w[i];
                }
                for (std::size_t i = 0; i < layer.b.size(); ++i) {
                    v.b[i] = cfg.momentum * v.b[i] - cfg.learning_rate * g.b[i];
                    layer.b[i] += v.b[i];
                }
            }
        }
        if (!val_idx.empty()) {
            const double acc = detail::accuracy_on(model, ind_x, ind_y, val_idx);
            if (acc > best_acc) {
                best_acc = acc;
                best = model;
            }
        }
    }
    return val_idx.empty() ? model : best;
}

} // namespace osdal
