#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "homo_graph.hpp"
#include "rng.hpp"
#include "sampling.hpp"

namespace circuitgcl {

enum class Activation : std::uint8_t { Tanh = 0, PReLU = 1 };

inline std::string_view to_string(Activation a) { return a == Activation::Tanh ? "tanh" : "prelu"; }
inline Activation parse_activation(std::string_view s) {
    if (s == "tanh") return Activation::Tanh;
    if (s == "prelu") return Activation::PReLU;
    throw ArgumentError("unknown activation '" + std::string(s) + "' (expected tanh or prelu)");
}

inline Tensor glorot(std::size_t in, std::size_t out, Rng& rng) {
    const Real limit = std::sqrt(6.0 / static_cast<Real>(in + out));
    Tensor w(in, out);
    for (auto& v : w.data()) v = rng.uniform(-limit, limit);
    return w;
}

inline Tensor gaussian(std::size_t r, std::size_t c, Real stddev, Rng& rng) {
    Tensor w(r, c);
    for (auto& v : w.data()) v = rng.normal(0.0, stddev);
    return w;
}

/// Applies the activation; `slope` is only read for PReLU.
inline Var activate(Tape& t, Var x, Activation act, const Var* slope) {
    if (act == Activation::Tanh) return tanh(t, x);
    return prelu(t, x, *slope);
}

// ---------------------------------------------------------------------------
// Node input features
// ---------------------------------------------------------------------------

/// Per-node inputs of a (sub)graph: type codes, log(1 + degree) in the full
/// graph, and the adjacency the encoder aggregates over.
struct GraphFeatures {
    std::vector<std::size_t> types;
    Tensor log_degree;  // N x 1
    AdjacencyView adj;

    std::size_t size() const { return types.size(); }
};

inline GraphFeatures features_of(const HomoGraph& g) {
    GraphFeatures f;
    f.types.assign(g.x.begin(), g.x.end());
    f.log_degree = Tensor(g.n, 1);
    for (std::size_t i = 0; i < g.n; ++i) f.log_degree[i] = std::log1p(static_cast<Real>(g.degrees[i]));
    f.adj = g.view();
    return f;
}

inline GraphFeatures features_of(const HomoGraph& g, const Subgraph& s) {
    GraphFeatures f;
    f.types.reserve(s.size());
    f.log_degree = Tensor(s.size(), 1);
    for (std::size_t k = 0; k < s.size(); ++k) {
        const auto id = s.node_ids[k];
        f.types.push_back(g.x[id]);
        f.log_degree[k] = std::log1p(static_cast<Real>(g.degrees[id]));
    }
    f.adj = s.view();
    return f;
}

// ---------------------------------------------------------------------------
// Two-layer perceptron
// ---------------------------------------------------------------------------

struct MlpParams {
    Tensor w1, b1, w2, b2;
    Tensor slope;  // 1x1, PReLU only
    Activation act = Activation::Tanh;

    static MlpParams init(std::size_t in, std::size_t hidden, std::size_t out, Activation act, Rng& rng) {
        MlpParams p;
        p.w1 = glorot(in, hidden, rng);
        p.b1 = Tensor(1, hidden);
        p.w2 = glorot(hidden, out, rng);
        p.b2 = Tensor(1, out);
        p.act = act;
        if (act == Activation::PReLU) p.slope = Tensor::scalar(0.25);
        return p;
    }

    std::vector<Tensor*> tensors() {
        std::vector<Tensor*> v{&w1, &b1, &w2, &b2};
        if (act == Activation::PReLU) v.push_back(&slope);
        return v;
    }
    std::vector<const Tensor*> tensors() const {
        std::vector<const Tensor*> v{&w1, &b1, &w2, &b2};
        if (act == Activation::PReLU) v.push_back(&slope);
        return v;
    }
    friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

struct MlpVars {
    Var w1, b1, w2, b2, slope;
    Activation act;
    std::vector<Var> all() const {
        std::vector<Var> v{w1, b1, w2, b2};
        if (act == Activation::PReLU) v.push_back(slope);
        return v;
    }
};

inline MlpVars bind(Tape& t, const MlpParams& p, bool trainable) {
    MlpVars v{t.leaf(p.w1, trainable), t.leaf(p.b1, trainable), t.leaf(p.w2, trainable), t.leaf(p.b2, trainable),
              Var(), p.act};
    if (p.act == Activation::PReLU) v.slope = t.leaf(p.slope, trainable);
    return v;
}

inline Var mlp_forward(Tape& t, const MlpVars& v, Var x) {
    Var h = add_row(t, matmul(t, x, v.w1), v.b1);
    h = activate(t, h, v.act, &v.slope);
    return add_row(t, matmul(t, h, v.w2), v.b2);
}

// ---------------------------------------------------------------------------
// Message-passing encoder
// ---------------------------------------------------------------------------

struct EncoderLayer {
    Tensor w_self, w_neigh, bias;
    Tensor slope;  // 1x1, PReLU only
    friend bool operator==(const EncoderLayer&, const EncoderLayer&) = default;
};

/// h0 = E[type] + log(1 + degree) * u, then per layer
/// h' = act(h W_self + mean_{j in N(i)} h_j W_neigh + b).
struct EncoderParams {
    std::size_t hidden_dim = 0;
    Activation act = Activation::Tanh;
    Real dropout = 0.0;
    Tensor type_embedding;  // 3 x hidden
    Tensor degree_weight;   // 1 x hidden
    std::vector<EncoderLayer> layers;

    std::size_t n_layers() const { return layers.size(); }

    static EncoderParams init(std::size_t hidden, std::size_t n_layers, Activation act, Real dropout, Rng& rng) {
        if (hidden == 0 || n_layers == 0) throw ArgumentError("encoder needs positive width and depth");
        if (!(dropout >= 0.0 && dropout < 1.0)) throw ArgumentError("dropout must lie in [0, 1)");
        EncoderParams p;
        p.hidden_dim = hidden;
        p.act = act;
        p.dropout = dropout;
        p.type_embedding = gaussian(3, hidden, 1.0, rng);
        p.degree_weight = gaussian(1, hidden, 1.0, rng);
        for (std::size_t l = 0; l < n_layers; ++l) {
            EncoderLayer layer{glorot(hidden, hidden, rng), glorot(hidden, hidden, rng), Tensor(1, hidden), Tensor()};
            if (act == Activation::PReLU) layer.slope = Tensor::scalar(0.25);
            p.layers.push_back(std::move(layer));
        }
        return p;
    }

    std::vector<Tensor*> tensors() {
        std::vector<Tensor*> v{&type_embedding, &degree_weight};
        for (auto& l : layers) {
            v.insert(v.end(), {&l.w_self, &l.w_neigh, &l.bias});
            if (act == Activation::PReLU) v.push_back(&l.slope);
        }
        return v;
    }
    std::vector<const Tensor*> tensors() const {
        std::vector<const Tensor*> v{&type_embedding, &degree_weight};
        for (const auto& l : layers) {
            v.insert(v.end(), {&l.w_self, &l.w_neigh, &l.bias});
            if (act == Activation::PReLU) v.push_back(&l.slope);
        }
        return v;
    }

    bool same_architecture(const EncoderParams& o) const {
        if (hidden_dim != o.hidden_dim || act != o.act || layers.size() != o.layers.size()) return false;
        auto a = tensors();
        auto b = o.tensors();
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (!a[i]->same_shape(*b[i])) return false;
        }
        return true;
    }

    bool all_finite() const {
        for (const Tensor* t : tensors()) {
            if (!t->all_finite()) return false;
        }
        return true;
    }

    friend bool operator==(const EncoderParams&, const EncoderParams&) = default;
};

struct EncoderVars {
    Var type_embedding, degree_weight;
    std::vector<std::array<Var, 4>> layers;  // w_self, w_neigh, bias, slope
    Activation act;

    std::vector<Var> all() const {
        std::vector<Var> v{type_embedding, degree_weight};
        for (const auto& l : layers) {
            v.insert(v.end(), {l[0], l[1], l[2]});
            if (act == Activation::PReLU) v.push_back(l[3]);
        }
        return v;
    }
};

inline EncoderVars bind(Tape& t, const EncoderParams& p, bool trainable) {
    EncoderVars v{t.leaf(p.type_embedding, trainable), t.leaf(p.degree_weight, trainable), {}, p.act};
    for (const auto& l : p.layers) {
        v.layers.push_back({t.leaf(l.w_self, trainable), t.leaf(l.w_neigh, trainable), t.leaf(l.bias, trainable),
                            p.act == Activation::PReLU ? t.leaf(l.slope, trainable) : Var()});
    }
    return v;
}

/// Input layer only: E[type] + log(1 + degree) u.
inline Var encoder_input(Tape& t, const EncoderVars& v, const GraphFeatures& f) {
    Var deg = t.constant(f.log_degree);
    return add(t, gather_rows(t, v.type_embedding, f.types), matmul(t, deg, v.degree_weight));
}

/// Unnormalized node embeddings (N x hidden). Dropout follows every hidden
/// layer except the last and is active only when `train` is set.
inline Var encode(Tape& t, const EncoderVars& v, const GraphFeatures& f, Real dropout_rate, bool train,
                  std::uint64_t dropout_seed) {
    if (f.size() == 0) throw ArgumentError("encode: graph is empty");
    if (f.adj.nodes() != f.size()) throw DimensionError("encode: adjacency and features disagree on node count");
    Var h = encoder_input(t, v, f);
    for (std::size_t l = 0; l < v.layers.size(); ++l) {
        const auto& L = v.layers[l];
        Var z = add(t, matmul(t, h, L[0]), matmul(t, neighbor_mean(t, h, f.adj), L[1]));
        h = activate(t, add_row(t, z, L[2]), v.act, &L[3]);
        if (train && dropout_rate > 0.0 && l + 1 < v.layers.size()) {
            h = dropout(t, h, dropout_rate, derive_seed(dropout_seed, l));
        }
    }
    return h;
}

/// Inference-mode encoding without gradients.
inline Tensor encode(const EncoderParams& p, const GraphFeatures& f) {
    Tape t;
    const auto v = bind(t, p, false);
    return t.value(encode(t, v, f, 0.0, false, 0));
}

inline Tensor encode(const EncoderParams& p, const HomoGraph& g) { return encode(p, features_of(g)); }

/// phi' = tau * phi + (1 - tau) * theta, elementwise.
inline EncoderParams ema_update(const EncoderParams& phi, const EncoderParams& theta, Real tau) {
    if (!(tau >= 0.0 && tau <= 1.0)) throw ArgumentError("ema tau must lie in [0, 1]");
    if (!phi.same_architecture(theta)) throw ArgumentError("ema_update: encoder architectures differ");
    EncoderParams out = phi;
    auto dst = out.tensors();
    auto src = theta.tensors();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        auto d = dst[i]->data();
        auto s = src[i]->data();
        for (std::size_t k = 0; k < d.size(); ++k) d[k] = tau * d[k] + (1.0 - tau) * s[k];
    }
    return out;
}

/// Copies gradients of `vars` (same order as `params`) out of the tape.
inline std::vector<Tensor> gradients(const Tape& t, const std::vector<Var>& vars) {
    std::vector<Tensor> g;
    g.reserve(vars.size());
    for (Var v : vars) g.push_back(t.gradient(v));
    return g;
}

}  // namespace circuitgcl
