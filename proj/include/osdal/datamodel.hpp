#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "osdal/common.hpp"

namespace osdal {

enum class Subset { InD, Discoverable, OOD };

inline char subset_tag(Subset s) {
    switch (s) {
        case Subset::InD: return 'I';
        case Subset::Discoverable: return 'D';
        case Subset::OOD: return 'O';
    }
    return '?';
}

// Hidden label of a sample. OOD samples carry no class label (-1).
struct GroundTruth {
    Subset subset = Subset::InD;
    int class_label = -1;
};

struct Sample {
    int id = 0;
    Vec features;
    GroundTruth truth;
};

// All samples of one scenario, addressable by id.
struct Dataset {
    int dim = 0;
    std::vector<Sample> samples;

    void rebuild_index() {
        index_.clear();
        index_.reserve(samples.size());
        for (std::size_t i = 0; i < samples.size(); ++i)
            index_.emplace(samples[i].id, i);
    }

    const Sample& by_id(int id) const {
        auto it = index_.find(id);
        if (it == index_.end())
            throw ProtocolError("unknown sample id " + std::to_string(id));
        return samples[it->second];
    }

    bool has_id(int id) const { return index_.count(id) != 0; }

private:
    std::unordered_map<int, std::size_t> index_;
};

// Oracle reveal for one queried sample.
struct Annotation {
    int sample_id = 0;
    Subset subset = Subset::InD;
    int class_label = -1; // -1 for OOD
};

// A labeled pool entry. class_label is -1 for entries of the OOD pool.
struct LabeledEntry {
    int sample_id = 0;
    int class_label = -1;
};

// Classes the task model is trained on, plus labeled-but-not-yet-promoted
// classes. known_classes keeps insertion order: the initial classes first,
// then promotion batches in ascending label order. That order doubles as the
// model's output-index map.
struct ClassRegistry {
    std::vector<int> known_classes;
    std::map<int, int> pending_counts; // class label -> labeled count, < t_e after promotion
    int promotion_threshold = 1;       // t_e

    bool is_known(int label) const {
        return std::find(known_classes.begin(), known_classes.end(), label) != known_classes.end();
    }
};

// t_e rule when the config leaves it unset: slightly above the uniformly
// distributed per-class query share.
inline int default_promotion_threshold(int query_size, int total_classes) {
    return (query_size + total_classes - 1) / total_classes + 1;
}

struct PoolState {
    std::vector<LabeledEntry> labeled_ind;  // L_I
    std::vector<LabeledEntry> labeled_disc; // L_D
    std::vector<int> labeled_ood;           // L_O
    std::vector<int> unlabeled;             // U
    ClassRegistry registry;

    std::size_t labeled_size() const {
        return labeled_ind.size() + labeled_disc.size() + labeled_ood.size();
    }
    std::size_t total_size() const { return labeled_size() + unlabeled.size(); }
};

struct RoutingLogEntry {
    int cycle = 0;
    int sample_id = 0;
    Subset subset = Subset::InD;
    int class_label = -1; // -1 for OOD
    char destination = '?'; // 'I', 'D' or 'O'
};

// Appends each annotated sample to the sub-pool implied by its annotation and
// the current registry: OOD -> L_O, known class -> L_I, anything else -> L_D
// with its pending count incremented. Promotion is a separate step.
inline PoolState route_annotations(PoolState pool,
                                   const std::vector<Annotation>& annotated,
                                   int cycle = 0,
                                   std::vector<RoutingLogEntry>* log = nullptr) {
    std::unordered_set<int> in_u(pool.unlabeled.begin(), pool.unlabeled.end());
    std::unordered_set<int> routed;
    routed.reserve(annotated.size());

    for (const Annotation& a : annotated) {
        if (in_u.count(a.sample_id) == 0)
            throw ProtocolError("route_annotations: sample " + std::to_string(a.sample_id) +
                                " is not in the unlabeled pool");
        char dest;
        if (a.subset == Subset::OOD) {
            pool.labeled_ood.push_back(a.sample_id);
            dest = 'O';
        } else if (pool.registry.is_known(a.class_label)) {
            pool.labeled_ind.push_back({a.sample_id, a.class_label});
            dest = 'I';
        } else {
            pool.labeled_disc.push_back({a.sample_id, a.class_label});
            pool.registry.pending_counts[a.class_label] += 1;
            dest = 'D';
        }
        routed.insert(a.sample_id);
        if (log) log->push_back({cycle, a.sample_id, a.subset, a.class_label, dest});
    }

    std::erase_if(pool.unlabeled, [&](int id) { return routed.count(id) != 0; });
    return pool;
}

// Moves every pending class whose count reached t_e into the known set and
// transfers its L_D samples to L_I. Classes are processed in ascending label
// order; afterwards every remaining pending count is strictly below t_e.
inline PoolState promote_classes(PoolState pool, std::vector<int>* promoted = nullptr) {
    std::vector<int> ready;
    for (const auto& [label, count] : pool.registry.pending_counts)
        if (count >= pool.registry.promotion_threshold) ready.push_back(label);
    // std::map iteration is already ascending; keep the sort as the contract.
    std::sort(ready.begin(), ready.end());

    for (int label : ready) {
        pool.registry.known_classes.push_back(label);
        pool.registry.pending_counts.erase(label);
        std::vector<LabeledEntry> keep;
        keep.reserve(pool.labeled_disc.size());
        for (const LabeledEntry& e : pool.labeled_disc) {
            if (e.class_label == label)
                pool.labeled_ind.push_back(e);
            else
                keep.push_back(e);
        }
        pool.labeled_disc = std::move(keep);
        if (promoted) promoted->push_back(label);
    }
    return pool;
}

} // namespace osdal
