#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "nn.hpp"
#include "optim.hpp"

namespace circuitgcl {

struct EmbeddingMatrix {
    Tensor values;
    bool normalized = false;
};

/// Mean of the normalized rows, detached: the center is a constant for
/// differentiation so the loss cannot be lowered by moving it.
inline Var scatter_center(Tape& t, Var h_norm) {
    if (t.value(h_norm).rows() == 0) throw ArgumentError("scatter_center: no rows");
    return detach(t, column_mean(t, h_norm));
}

/// -(1/N) sum_i ||h_i - c||^2.
inline Var scattering_loss(Tape& t, Var h_norm, Var c) {
    const Tensor& H = t.value(h_norm);
    const Tensor& C = t.value(c);
    if (C.rows() != 1 || C.cols() != H.cols()) {
        throw ArgumentError("scattering_loss: center " + C.shape_string() + " does not match embeddings " +
                            H.shape_string());
    }
    const Real n = static_cast<Real>(H.rows());
    Var diff = add_row(t, h_norm, scale(t, c, -1.0));
    return scale(t, sum(t, square(t, diff)), -1.0 / n);
}

/// -(1/N) sum_i cos(z_i, h_i). The target rows are detached; zero rows are
/// guarded by dividing by max(||row||, eps).
inline Var alignment_loss(Tape& t, Var z, Var h_target, Real eps = 1e-8) {
    const Tensor& Z = t.value(z);
    const Tensor& H = t.value(h_target);
    if (!Z.same_shape(H)) {
        throw ArgumentError("alignment_loss: shapes " + Z.shape_string() + " and " + H.shape_string() + " differ");
    }
    if (Z.rows() == 0) throw ArgumentError("alignment_loss: no rows");
    Var h = detach(t, rowwise_l2_normalize(t, h_target, eps));
    Var zn = rowwise_l2_normalize(t, z, eps);
    return scale(t, mean(t, row_sum(t, mul(t, zn, h))), -1.0);
}

// Tensor-level conveniences for inspection and tests.

inline Tensor normalize_rows(const Tensor& h, Real eps = 1e-8) {
    Tape t;
    return t.value(rowwise_l2_normalize(t, t.constant(h), eps));
}

inline Tensor scatter_center(const Tensor& h_norm) {
    Tape t;
    return t.value(scatter_center(t, t.constant(h_norm)));
}

inline Real scattering_loss(const Tensor& h_norm, const Tensor& c) {
    Tape t;
    return t.scalar(scattering_loss(t, t.constant(h_norm), t.constant(c)));
}

inline Real alignment_loss(const Tensor& z, const Tensor& h_target, Real eps = 1e-8) {
    Tape t;
    return t.scalar(alignment_loss(t, t.constant(z), t.constant(h_target), eps));
}

/// Mean Euclidean distance over all unordered row pairs.
inline Real mean_pairwise_distance(const Tensor& h) {
    const std::size_t n = h.rows();
    if (n < 2) return 0.0;
    Real total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto a = h.row(i);
        for (std::size_t j = i + 1; j < n; ++j) {
            const auto b = h.row(j);
            Real s = 0.0;
            for (std::size_t k = 0; k < a.size(); ++k) {
                const Real d = a[k] - b[k];
                s += d * d;
            }
            total += std::sqrt(s);
        }
    }
    return total / (0.5 * static_cast<Real>(n) * static_cast<Real>(n - 1));
}

// ---------------------------------------------------------------------------
// Pre-training
// ---------------------------------------------------------------------------

struct PretrainConfig {
    std::size_t hidden_dim = 256;
    std::size_t n_layers = 4;
    Activation activation = Activation::Tanh;
    Real dropout = 0.3;
    Real ema_tau = 0.99;
    Real scatter_weight = 1.0;
    std::size_t epochs = 100;
    Real learning_rate = 1e-6;
    Real eps = 1e-8;
    bool ema_per_step = false;
    /// Graphs above this many nodes are trained on sampled subgraph batches.
    std::size_t batch_node_threshold = 50000;
    std::size_t batch_anchors = 4096;
    std::size_t hops = 2;
    std::size_t fanout = 10;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(ema_tau >= 0.0 && ema_tau <= 1.0)) throw ArgumentError("ema_tau must lie in [0, 1]");
        if (!(scatter_weight >= 0.0)) throw ArgumentError("scatter_weight must be non-negative");
        if (!(learning_rate > 0.0)) throw ArgumentError("learning_rate must be positive");
        if (!(eps > 0.0)) throw ArgumentError("eps must be positive");
        if (hidden_dim == 0 || n_layers == 0) throw ArgumentError("encoder needs positive width and depth");
        if (!(dropout >= 0.0 && dropout < 1.0)) throw ArgumentError("dropout must lie in [0, 1)");
        if (batch_anchors == 0 || fanout == 0) throw ArgumentError("batch_anchors and fanout must be positive");
    }
};

struct PretrainEpoch {
    Real loss;
    Real alignment;
    Real scattering;
};

struct PretrainResult {
    EncoderParams theta;
    EncoderParams phi;
    MlpParams predictor;
    EmbeddingMatrix embeddings;
    std::vector<PretrainEpoch> history;
};

struct PretrainState {
    EncoderParams theta;
    EncoderParams phi;
    MlpParams predictor;
};

inline PretrainState init_pretrain_state(const PretrainConfig& cfg) {
    Rng rng(derive_seed(cfg.seed, 0x5eed));
    PretrainState s;
    s.theta = EncoderParams::init(cfg.hidden_dim, cfg.n_layers, cfg.activation, cfg.dropout, rng);
    s.phi = s.theta;
    s.predictor = MlpParams::init(cfg.hidden_dim, cfg.hidden_dim, cfg.hidden_dim, cfg.activation, rng);
    return s;
}

/// One gradient step of L = L_alignment + lambda * L_scattering on theta and
/// the predictor. phi is read only.
inline PretrainEpoch pretrain_step(PretrainState& s, const GraphFeatures& f, const PretrainConfig& cfg, Sgd& opt,
                                   std::uint64_t dropout_seed, std::size_t epoch) {
    Tape t;
    const auto ov = bind(t, s.theta, true);
    const auto pv = bind(t, s.predictor, true);
    const auto tv = bind(t, s.phi, false);

    Var h_target = rowwise_l2_normalize(t, encode(t, tv, f, cfg.dropout, false, 0), cfg.eps);
    Var h_online = rowwise_l2_normalize(t, encode(t, ov, f, cfg.dropout, true, dropout_seed), cfg.eps);
    Var c = scatter_center(t, h_online);
    Var l_scatter = scattering_loss(t, h_online, c);
    Var z = mlp_forward(t, pv, h_online);
    Var l_align = alignment_loss(t, z, h_target, cfg.eps);
    Var loss = add(t, l_align, scale(t, l_scatter, cfg.scatter_weight));

    const PretrainEpoch rec{t.scalar(loss), t.scalar(l_align), t.scalar(l_scatter)};
    if (!std::isfinite(rec.loss)) throw TrainingError(epoch, "pre-training loss is not finite");
    t.backward(loss);

    std::vector<Var> vars = ov.all();
    const auto pvars = pv.all();
    vars.insert(vars.end(), pvars.begin(), pvars.end());
    std::vector<Tensor*> params = s.theta.tensors();
    const auto pp = s.predictor.tensors();
    params.insert(params.end(), pp.begin(), pp.end());
    opt.step(params, gradients(t, vars));
    return rec;
}

/// Representation-scattering pre-training. Returns the online encoder and the
/// normalized online embeddings of every node (inference mode).
inline PretrainResult pretrain(const HomoGraph& g, const PretrainConfig& cfg) {
    cfg.validate();
    if (g.n == 0) throw ArgumentError("pretrain: graph is empty");
    PretrainState s = init_pretrain_state(cfg);
    Sgd opt{cfg.learning_rate};
    const GraphFeatures full = features_of(g);
    const bool batched = g.n > cfg.batch_node_threshold;
    std::vector<PretrainEpoch> history;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const std::uint64_t epoch_seed = derive_seed(cfg.seed, 1000 + epoch);
        if (!batched) {
            history.push_back(pretrain_step(s, full, cfg, opt, epoch_seed, epoch));
            if (cfg.ema_per_step) s.phi = ema_update(s.phi, s.theta, cfg.ema_tau);
        } else {
            std::vector<std::uint32_t> order(g.n);
            for (std::uint32_t i = 0; i < g.n; ++i) order[i] = i;
            Rng rng(epoch_seed);
            rng.shuffle(order);
            PretrainEpoch acc{0, 0, 0};
            std::size_t batches = 0;
            for (std::size_t b = 0; b < order.size(); b += cfg.batch_anchors) {
                const std::size_t e = std::min(order.size(), b + cfg.batch_anchors);
                const std::span<const std::uint32_t> anchors(order.data() + b, e - b);
                const Subgraph sub = sample_subgraph(g, anchors, cfg.hops, cfg.fanout, derive_seed(epoch_seed, b));
                const auto rec = pretrain_step(s, features_of(g, sub), cfg, opt, derive_seed(epoch_seed, b + 1), epoch);
                acc.loss += rec.loss;
                acc.alignment += rec.alignment;
                acc.scattering += rec.scattering;
                ++batches;
                if (cfg.ema_per_step) s.phi = ema_update(s.phi, s.theta, cfg.ema_tau);
            }
            const Real k = static_cast<Real>(batches);
            history.push_back({acc.loss / k, acc.alignment / k, acc.scattering / k});
        }
        if (!cfg.ema_per_step) s.phi = ema_update(s.phi, s.theta, cfg.ema_tau);
        if (!s.theta.all_finite()) throw TrainingError(epoch, "encoder parameters are not finite");
    }

    PretrainResult r;
    r.embeddings = {normalize_rows(encode(s.theta, full), cfg.eps), true};
    r.theta = std::move(s.theta);
    r.phi = std::move(s.phi);
    r.predictor = std::move(s.predictor);
    r.history = std::move(history);
    return r;
}

/// CSV with a node_id column followed by one column per embedding dimension.
inline void export_embeddings(const EmbeddingMatrix& e, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "node_id";
    for (std::size_t k = 0; k < e.values.cols(); ++k) out << ",e" << k;
    out << '\n';
    char buf[32];
    for (std::size_t i = 0; i < e.values.rows(); ++i) {
        out << i;
        for (Real v : e.values.row(i)) {
            std::snprintf(buf, sizeof buf, "%.17g", v);
            out << ',' << buf;
        }
        out << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace circuitgcl
