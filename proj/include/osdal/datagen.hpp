#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "osdal/csv.hpp"
#include "osdal/datamodel.hpp"
#include "osdal/rng.hpp"

namespace osdal {

enum class OodMode { gaussian_far, uniform_noise };

// Synthetic scenario description. Known-class clusters are unit-variance
// isotropic Gaussians with centroids on a sphere of radius `separation`;
// discoverable clusters sit between pairs of known centroids, displaced by
// `discoverable_offset` (the near-OOD analogue); the irrelevant OOD mass is
// placed far outside the in-distribution hull.
struct ScenarioSpec {
    int dim = 8;
    int known_classes = 6;        // C
    int discoverable_classes = 4; // K
    int samples_per_class = 200;
    std::vector<int> per_class_counts; // optional override, size C+K
    OodMode ood_mode = OodMode::gaussian_far;
    double ood_ratio = 1.0; // (|I|+|D|) : |O| = ood_ratio : 1
    double separation = 3.0;
    double discoverable_offset = 1.0;
    double test_fraction = 0.25;
    std::uint64_t seed = 1;
    std::string dataset_path; // when set, load this file instead of generating
};

inline void validate(const ScenarioSpec& s) {
    if (!s.dataset_path.empty()) {
        if (s.test_fraction < 0.0 || s.test_fraction >= 1.0)
            throw ValidationError("scenario.test_fraction: must be in [0, 1)");
        return;
    }
    if (s.dim < 1) throw ValidationError("scenario.dim: must be >= 1");
    if (s.known_classes < 2) throw ValidationError("scenario.known_classes: must be >= 2");
    if (s.discoverable_classes < 0)
        throw ValidationError("scenario.discoverable_classes: must be >= 0");
    const int total = s.known_classes + s.discoverable_classes;
    if (!s.per_class_counts.empty()) {
        if (static_cast<int>(s.per_class_counts.size()) != total)
            throw ValidationError("scenario.per_class_counts: need one entry per class");
        for (int c : s.per_class_counts)
            if (c < 1) throw ValidationError("scenario.per_class_counts: entries must be >= 1");
    } else if (s.samples_per_class < 1) {
        throw ValidationError("scenario.samples_per_class: must be >= 1");
    }
    if (!(s.ood_ratio > 0.0)) throw ValidationError("scenario.ood_ratio: must be > 0");
    if (!(s.separation > 0.0)) throw ValidationError("scenario.separation: must be > 0");
    if (s.discoverable_offset < 0.0)
        throw ValidationError("scenario.discoverable_offset: must be >= 0");
    if (s.test_fraction < 0.0 || s.test_fraction >= 1.0)
        throw ValidationError("scenario.test_fraction: must be in [0, 1)");
}

struct Scenario {
    Dataset data;
    std::vector<int> test_ids; // stratified over the C+K classes, never queried
};

namespace detail {

inline Vec random_unit(int dim, Rng& rng) {
    Vec v(dim);
    double norm = 0.0;
    do {
        norm = 0.0;
        for (double& x : v) {
            x = rng.normal();
            norm += x * x;
        }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
}

} // namespace detail

// Deterministic per (spec, seed). Draw order: known centroids, discoverable
// centroids, OOD placement, all samples class by class then OOD, test split.
inline Scenario generate(const ScenarioSpec& spec) {
    validate(spec);
    if (!spec.dataset_path.empty())
        throw ValidationError("scenario.dataset_path: generate() needs a synthetic spec");
    Rng rng(spec.seed);
    const int c_known = spec.known_classes;
    const int k_disc = spec.discoverable_classes;
    const int total_classes = c_known + k_disc;

    std::vector<int> counts = spec.per_class_counts;
    if (counts.empty()) counts.assign(total_classes, spec.samples_per_class);

    std::vector<Vec> centroids;
    for (int c = 0; c < c_known; ++c) {
        Vec u = detail::random_unit(spec.dim, rng);
        for (double& x : u) x *= spec.separation;
        centroids.push_back(std::move(u));
    }
    for (int k = 0; k < k_disc; ++k) {
        const Vec& a = centroids[k % c_known];
        const Vec& b = centroids[(k + 1) % c_known];
        Vec mid(spec.dim);
        for (int i = 0; i < spec.dim; ++i) mid[i] = 0.5 * (a[i] + b[i]);
        const Vec dir = detail::random_unit(spec.dim, rng);
        for (int i = 0; i < spec.dim; ++i) mid[i] += spec.discoverable_offset * dir[i];
        centroids.push_back(std::move(mid));
    }

    // Far-OOD placement: well outside the in-distribution ball of radius
    // separation + 3 sigma.
    const double ind_radius = spec.separation + 3.0;
    Vec ood_center;
    double noise_halfwidth = 0.0;
    if (spec.ood_mode == OodMode::gaussian_far) {
        ood_center = detail::random_unit(spec.dim, rng);
        for (double& x : ood_center) x *= 3.0 * ind_radius;
    } else {
        noise_halfwidth = 3.0 * ind_radius;
    }

    long total_target = 0;
    for (int c : counts) total_target += c;
    const long ood_count = std::lround(static_cast<double>(total_target) / spec.ood_ratio);

    Scenario out;
    out.data.dim = spec.dim;
    int next_id = 0;
    for (int c = 0; c < total_classes; ++c) {
        for (int i = 0; i < counts[c]; ++i) {
            Sample s;
            s.id = next_id++;
            s.features.resize(spec.dim);
            for (int j = 0; j < spec.dim; ++j) s.features[j] = centroids[c][j] + rng.normal();
            s.truth.subset = c < c_known ? Subset::InD : Subset::Discoverable;
            s.truth.class_label = c;
            out.data.samples.push_back(std::move(s));
        }
    }
    for (long i = 0; i < ood_count; ++i) {
        Sample s;
        s.id = next_id++;
        s.features.resize(spec.dim);
        if (spec.ood_mode == OodMode::gaussian_far) {
            for (int j = 0; j < spec.dim; ++j) s.features[j] = ood_center[j] + rng.normal();
        } else {
            for (int j = 0; j < spec.dim; ++j)
                s.features[j] = rng.uniform(-noise_halfwidth, noise_halfwidth);
        }
        s.truth.subset = Subset::OOD;
        s.truth.class_label = -1;
        out.data.samples.push_back(std::move(s));
    }
    out.data.rebuild_index();

    // Stratified test split, at least one pool sample kept per class.
    if (spec.test_fraction > 0.0) {
        int offset = 0;
        for (int c = 0; c < total_classes; ++c) {
            std::vector<int> ids(counts[c]);
            for (int i = 0; i < counts[c]; ++i) ids[i] = offset + i;
            rng.shuffle(ids);
            long k = std::lround(spec.test_fraction * counts[c]);
            k = std::clamp<long>(k, 0, counts[c] - 1);
            out.test_ids.insert(out.test_ids.end(), ids.begin(), ids.begin() + k);
            offset += counts[c];
        }
        std::sort(out.test_ids.begin(), out.test_ids.end());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Feature file format v1 (text, UTF-8, LF):
//   osdal-features v1, d=<dim>
//   id,f0,...,f{d-1},subset,class_label
// subset is I, D or O; class_label is empty for O rows. Floats are written
// as shortest round-trip decimals, so save(load(f)) reproduces f exactly.
// ---------------------------------------------------------------------------

inline void save_features(const Dataset& data, std::ostream& os) {
    os << "osdal-features v1, d=" << data.dim << "\n";
    for (const Sample& s : data.samples) {
        os << s.id;
        for (double f : s.features) os << ',' << format_double(f);
        os << ',' << subset_tag(s.truth.subset) << ',';
        if (s.truth.subset != Subset::OOD) os << s.truth.class_label;
        os << "\n";
    }
}

inline void save_features(const Dataset& data, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary); // binary: keep LF on every platform
    if (!os) throw FormatError("cannot open " + path.string() + " for writing");
    save_features(data, os);
    if (!os) throw FormatError("failed writing " + path.string());
}

inline Dataset load_features(std::istream& is, const std::string& name) {
    Dataset data;
    std::string line;
    if (!std::getline(is, line))
        throw FormatError(name + ":1: empty file, expected 'osdal-features v1' header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string prefix = "osdal-features v1, d=";
    if (line.rfind(prefix, 0) != 0)
        throw FormatError(name + ":1: bad header '" + line + "'");
    data.dim = static_cast<int>(parse_long(line.substr(prefix.size()), name + ":1"));
    if (data.dim < 1) throw FormatError(name + ":1: dimension must be >= 1");

    std::set<int> seen_ids;
    std::vector<int> line_of; // per sample, for post-hoc invariant errors
    int max_ind_label = -1;
    int line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::string where = name + ":" + std::to_string(line_no);
        const std::vector<std::string> fields = split_csv_line(line);
        if (static_cast<int>(fields.size()) != data.dim + 3)
            throw FormatError(where + ": expected " + std::to_string(data.dim + 3) +
                              " fields, got " + std::to_string(fields.size()));
        Sample s;
        s.id = static_cast<int>(parse_long(fields[0], where));
        if (!seen_ids.insert(s.id).second)
            throw FormatError(where + ": duplicate sample id " + fields[0]);
        s.features.resize(data.dim);
        for (int j = 0; j < data.dim; ++j) s.features[j] = parse_double(fields[1 + j], where);
        const std::string& tag = fields[data.dim + 1];
        const std::string& label = fields[data.dim + 2];
        if (tag == "O") {
            if (!label.empty())
                throw FormatError(where + ": OOD row must not carry a class label");
            s.truth.subset = Subset::OOD;
            s.truth.class_label = -1;
        } else if (tag == "I" || tag == "D") {
            s.truth.subset = tag == "I" ? Subset::InD : Subset::Discoverable;
            s.truth.class_label = static_cast<int>(parse_long(label, where));
            if (s.truth.class_label < 0)
                throw FormatError(where + ": class label must be >= 0");
            if (tag == "I") max_ind_label = std::max(max_ind_label, s.truth.class_label);
        } else {
            throw FormatError(where + ": unknown subset tag '" + tag + "'");
        }
        line_of.push_back(line_no);
        data.samples.push_back(std::move(s));
    }
    // Discoverable labels must sit above the known-class range [0, C).
    for (std::size_t i = 0; i < data.samples.size(); ++i) {
        const Sample& s = data.samples[i];
        if (s.truth.subset == Subset::Discoverable && s.truth.class_label <= max_ind_label)
            throw FormatError(name + ":" + std::to_string(line_of[i]) +
                              ": discoverable class " + std::to_string(s.truth.class_label) +
                              " overlaps the known-class range [0, " +
                              std::to_string(max_ind_label + 1) + ")");
    }
    data.rebuild_index();
    return data;
}

inline Dataset load_features(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open " + path.string());
    return load_features(is, path.filename().string());
}

// Deterministic stratified split for externally supplied datasets; OOD rows
// always stay in the pool.
inline std::vector<int> stratified_test_split(const Dataset& data, double fraction,
                                              std::uint64_t seed) {
    if (fraction < 0.0 || fraction >= 1.0)
        throw ValidationError("test_fraction: must be in [0, 1)");
    std::map<int, std::vector<int>> by_class;
    for (const Sample& s : data.samples)
        if (s.truth.subset != Subset::OOD) by_class[s.truth.class_label].push_back(s.id);
    Rng rng(Rng::derive(seed, 0x7e57));
    std::vector<int> test_ids;
    for (auto& [label, ids] : by_class) {
        std::sort(ids.begin(), ids.end());
        rng.shuffle(ids);
        long k = std::lround(fraction * static_cast<double>(ids.size()));
        k = std::clamp<long>(k, 0, static_cast<long>(ids.size()) - 1);
        test_ids.insert(test_ids.end(), ids.begin(), ids.begin() + k);
    }
    std::sort(test_ids.begin(), test_ids.end());
    return test_ids;
}

} // namespace osdal
