#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "osdal/common.hpp"
#include "osdal/numeric.hpp"
#include "osdal/rng.hpp"

namespace osdal {

// One dense layer, weights row-major [out x in].
struct Layer {
    int in = 0;
    int out = 0;
    Vec w;
    Vec b;
};

// Small MLP task model: ReLU hidden layers, linear output. The output layer
// has one logit per entry of class_labels (position = output index), so the
// label space can grow between cycles by rebuilding the model. With no hidden
// layers the model is a plain affine map and embed() returns the input.
struct ClassifierModel {
    int input_dim = 0;
    std::vector<Layer> layers;     // hidden layers..., then the output layer
    std::vector<int> class_labels; // output index -> class label
    double dropout = 0.0;          // rate for stochastic forward passes

    int num_hidden() const { return static_cast<int>(layers.size()) - 1; }
    int output_dim() const { return static_cast<int>(class_labels.size()); }

    int output_index_of(int label) const {
        for (std::size_t i = 0; i < class_labels.size(); ++i)
            if (class_labels[i] == label) return static_cast<int>(i);
        return -1;
    }
};

// Fresh model with uniform fan-in init: w ~ U(-1/sqrt(in), 1/sqrt(in)) drawn
// row-major layer by layer, biases zero. Draw order is part of the
// reproducibility contract.
inline ClassifierModel init_model(int input_dim,
                                  const std::vector<int>& hidden,
                                  const std::vector<int>& class_labels,
                                  double dropout,
                                  Rng& rng) {
    if (input_dim < 1) throw std::invalid_argument("init_model: input_dim < 1");
    if (class_labels.empty()) throw std::invalid_argument("init_model: no output classes");
    ClassifierModel m;
    m.input_dim = input_dim;
    m.class_labels = class_labels;
    m.dropout = dropout;
    int prev = input_dim;
    std::vector<int> widths = hidden;
    widths.push_back(static_cast<int>(class_labels.size()));
    for (int width : widths) {
        Layer layer;
        layer.in = prev;
        layer.out = width;
        layer.w.resize(static_cast<std::size_t>(width) * prev);
        layer.b.assign(width, 0.0);
        const double a = 1.0 / std::sqrt(static_cast<double>(prev));
        for (double& wij : layer.w) wij = rng.uniform(-a, a);
        m.layers.push_back(std::move(layer));
        prev = width;
    }
    return m;
}

inline void affine(const Layer& l, std::span<const double> x, Vec& out) {
    out.resize(l.out);
    for (int r = 0; r < l.out; ++r) {
        const double* wr = l.w.data() + static_cast<std::size_t>(r) * l.in;
        double s = l.b[r];
        for (int c = 0; c < l.in; ++c) s += wr[c] * x[c];
        out[r] = s;
    }
}

// Activations of one forward pass, kept for backprop.
struct ForwardTrace {
    std::vector<Vec> hidden_act; // post-ReLU output of each hidden layer
    Vec logits;
};

inline void forward_trace(const ClassifierModel& m, std::span<const double> x, ForwardTrace& t) {
    if (static_cast<int>(x.size()) != m.input_dim)
        throw std::invalid_argument("forward: feature dimension mismatch");
    t.hidden_act.resize(m.num_hidden());
    std::span<const double> cur = x;
    for (int l = 0; l < m.num_hidden(); ++l) {
        affine(m.layers[l], cur, t.hidden_act[l]);
        for (double& v : t.hidden_act[l]) v = v > 0.0 ? v : 0.0;
        cur = t.hidden_act[l];
    }
    affine(m.layers.back(), cur, t.logits);
}

inline Vec forward_logits(const ClassifierModel& m, std::span<const double> x) {
    ForwardTrace t;
    forward_trace(m, x, t);
    return std::move(t.logits);
}

// Post-activation output of the last hidden layer; the input itself when the
// model has no hidden layer.
inline Vec embed(const ClassifierModel& m, std::span<const double> x) {
    if (static_cast<int>(x.size()) != m.input_dim)
        throw std::invalid_argument("embed: feature dimension mismatch");
    if (m.num_hidden() == 0) return Vec(x.begin(), x.end());
    ForwardTrace t;
    forward_trace(m, x, t);
    return std::move(t.hidden_act.back());
}

// Forward pass with inverted dropout on every hidden activation (MC-dropout
// style scoring). rate = 0 reduces to the deterministic forward pass.
inline Vec forward_logits_stochastic(const ClassifierModel& m, std::span<const double> x,
                                     double rate, Rng& rng) {
    if (static_cast<int>(x.size()) != m.input_dim)
        throw std::invalid_argument("forward: feature dimension mismatch");
    Vec cur(x.begin(), x.end());
    Vec next;
    for (int l = 0; l < m.num_hidden(); ++l) {
        affine(m.layers[l], cur, next);
        for (double& v : next) {
            v = v > 0.0 ? v : 0.0;
            if (rate > 0.0) v = rng.uniform() < rate ? 0.0 : v / (1.0 - rate);
        }
        cur = next;
    }
    affine(m.layers.back(), cur, next);
    return next;
}

// ---------------------------------------------------------------------------
// Checkpoint format: "OSDLMDL1" magic, then little-endian fields
//   u32 version, u32 input_dim, u32 n_layers, per layer {u32 in, u32 out},
//   u32 n_classes, i32 class labels, f64 dropout,
//   per layer: f64 weights row-major, f64 biases.
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr char kModelMagic[8] = {'O', 'S', 'D', 'L', 'M', 'D', 'L', '1'};

template <typename T>
void write_le(std::ostream& os, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big)
        std::reverse(buf, buf + sizeof(T));
    os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
    unsigned char buf[sizeof(T)];
    is.read(reinterpret_cast<char*>(buf), sizeof(T));
    if (!is) throw FormatError("model checkpoint: truncated file");
    if constexpr (std::endian::native == std::endian::big)
        std::reverse(buf, buf + sizeof(T));
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
}

} // namespace detail

inline void save_checkpoint(const ClassifierModel& m, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open " + path.string() + " for writing");
    os.write(detail::kModelMagic, 8);
    detail::write_le<std::uint32_t>(os, 1);
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(m.input_dim));
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(m.layers.size()));
    for (const Layer& l : m.layers) {
        detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(l.in));
        detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(l.out));
    }
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(m.class_labels.size()));
    for (int c : m.class_labels) detail::write_le<std::int32_t>(os, c);
    detail::write_le<double>(os, m.dropout);
    for (const Layer& l : m.layers) {
        for (double v : l.w) detail::write_le<double>(os, v);
        for (double v : l.b) detail::write_le<double>(os, v);
    }
    if (!os) throw FormatError("failed writing " + path.string());
}

inline ClassifierModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open " + path.string());
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, detail::kModelMagic, 8) != 0)
        throw FormatError(path.string() + ": not an osdal model checkpoint");
    const auto version = detail::read_le<std::uint32_t>(is);
    if (version != 1)
        throw FormatError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
    ClassifierModel m;
    m.input_dim = static_cast<int>(detail::read_le<std::uint32_t>(is));
    const auto n_layers = detail::read_le<std::uint32_t>(is);
    m.layers.resize(n_layers);
    for (Layer& l : m.layers) {
        l.in = static_cast<int>(detail::read_le<std::uint32_t>(is));
        l.out = static_cast<int>(detail::read_le<std::uint32_t>(is));
    }
    const auto n_classes = detail::read_le<std::uint32_t>(is);
    m.class_labels.resize(n_classes);
    for (int& c : m.class_labels) c = static_cast<int>(detail::read_le<std::int32_t>(is));
    if (n_layers == 0 || m.layers.back().out != static_cast<int>(n_classes))
        throw FormatError(path.string() + ": output layer does not match class map");
    m.dropout = detail::read_le<double>(is);
    for (Layer& l : m.layers) {
        l.w.resize(static_cast<std::size_t>(l.in) * l.out);
        l.b.resize(l.out);
        for (double& v : l.w) v = detail::read_le<double>(is);
        for (double& v : l.b) v = detail::read_le<double>(is);
    }
    return m;
}

} // namespace osdal
