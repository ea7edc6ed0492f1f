#pragma once

#include <span>

#include "osdal/classifier.hpp"
#include "osdal/datamodel.hpp"

namespace osdal {

// Accuracy over the full C+K target label space: a test sample counts as
// correct only if its true class is already in the trained label space AND
// the model predicts it. Undiscovered classes therefore contribute zero.
inline double accuracy_over_targets(const ClassifierModel& model, const Dataset& data,
                                    std::span<const int> test_ids,
                                    const ClassRegistry& registry) {
    if (test_ids.empty())
        throw std::invalid_argument("accuracy_over_targets: empty test set");
    std::size_t correct = 0;
    for (int id : test_ids) {
        const Sample& s = data.by_id(id);
        if (s.truth.subset == Subset::OOD || !registry.is_known(s.truth.class_label)) continue;
        const Vec logits = forward_logits(model, s.features);
        if (model.class_labels[argmax(logits)] == s.truth.class_label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(test_ids.size());
}

// Fraction of a query that is worth labeling: I and D are positives, O is the
// negative class.
inline double selection_precision(const Dataset& data, std::span<const int> selected) {
    if (selected.empty())
        throw std::invalid_argument("selection_precision: empty selection");
    std::size_t positive = 0;
    for (int id : selected)
        if (data.by_id(id).truth.subset != Subset::OOD) ++positive;
    return static_cast<double>(positive) / static_cast<double>(selected.size());
}

// Classes with at least one labeled sample: the trained ones plus every
// pending discovered class.
inline int discovered_count(const PoolState& pool) {
    return static_cast<int>(pool.registry.known_classes.size() +
                            pool.registry.pending_counts.size());
}

} // namespace osdal
