#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "graph_io.hpp"
#include "losses.hpp"
#include "metrics.hpp"
#include "nn.hpp"
#include "optim.hpp"
#include "rsm.hpp"

namespace circuitgcl {

enum class TaskKind : std::uint8_t { EdgeRegression = 0, NodeClassification = 1 };

inline std::string_view to_string(TaskKind k) {
    return k == TaskKind::EdgeRegression ? "edge_regression" : "node_classification";
}
inline TaskKind parse_task_kind(std::string_view s) {
    if (s == "edge" || s == "edge_regression") return TaskKind::EdgeRegression;
    if (s == "node" || s == "node_classification") return TaskKind::NodeClassification;
    throw ArgumentError("unknown task '" + std::string(s) + "' (expected edge or node)");
}

struct TaskConfig {
    TaskKind task = TaskKind::EdgeRegression;
    LossKind loss = LossKind::MSE;
    std::size_t hidden_dim = 144;
    std::size_t n_layers = 5;
    Activation activation = Activation::Tanh;
    std::size_t epochs = 100;
    Real learning_rate = 1e-3;
    std::size_t batch_size = 256;
    Real sigma_noise = 0.001;
    std::size_t gmm_components = 8;
    Real focal_gamma = 2.0;
    std::size_t n_classes = 5;
    /// Keep the pre-trained encoder fixed; otherwise it is fine-tuned with
    /// the backbone and head.
    bool freeze_embeddings = true;
    LabelSpec labels;
    std::uint64_t seed = 0;

    void validate() const {
        if (hidden_dim == 0 || n_layers == 0) throw ArgumentError("task backbone needs positive width and depth");
        if (!(learning_rate > 0.0)) throw ArgumentError("learning_rate must be positive");
        if (batch_size == 0) throw ArgumentError("batch_size must be positive");
        if (!(sigma_noise > 0.0)) throw ArgumentError("sigma_noise must be positive");
        if (gmm_components == 0) throw ArgumentError("gmm_components must be positive");
        if (!(focal_gamma >= 0.0)) throw ArgumentError("focal gamma must be non-negative");
        if (n_classes < 2) throw ArgumentError("n_classes must be at least 2");
        if ((task == TaskKind::EdgeRegression) != is_regression_loss(loss)) {
            throw ArgumentError("loss '" + std::string(to_string(loss)) + "' does not fit task " +
                                std::string(to_string(task)));
        }
        labels.validate();
    }
    friend bool operator==(const TaskConfig&, const TaskConfig&) = default;
};

// ---------------------------------------------------------------------------
// Labels
// ---------------------------------------------------------------------------

struct EdgeSample {
    std::uint32_t u, v;
    Real y;  // normalized
};

struct NodeSample {
    std::uint32_t node;
    std::size_t y;  // bin class
};

struct TaskLabels {
    std::vector<EdgeSample> edges;
    std::vector<NodeSample> nodes;
    std::size_t dropped = 0;  // labels outside the regression range
};

/// Normalized coupling labels and binned ground-capacitance classes of a
/// design. Unlabeled records are skipped; out-of-range values are counted.
inline TaskLabels extract_labels(const GraphBundle& b, const LabelSpec& spec, std::size_t n_classes) {
    spec.validate();
    TaskLabels out;
    for (const auto& c : b.candidates) {
        if (!c.farads) continue;
        if (!spec.contains(*c.farads)) {
            ++out.dropped;
            continue;
        }
        out.edges.push_back({c.u, c.v, normalize_label(*c.farads, spec)});
    }
    for (const auto& [id, v] : b.ground) {
        if (!v) continue;
        if (!spec.contains(*v)) {
            ++out.dropped;
            continue;
        }
        out.nodes.push_back({id, bin_index(normalize_label(*v, spec), n_classes)});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

/// Downstream message-passing stack over [embedding, type one-hot,
/// log(1 + degree)] node inputs.
struct BackboneParams {
    std::size_t hidden_dim = 0;
    Activation act = Activation::Tanh;
    Tensor w_in, b_in;
    Tensor slope_in;  // 1x1, PReLU only
    std::vector<EncoderLayer> layers;

    static BackboneParams init(std::size_t in_dim, std::size_t hidden, std::size_t n_layers, Activation act, Rng& rng) {
        BackboneParams p;
        p.hidden_dim = hidden;
        p.act = act;
        p.w_in = glorot(in_dim, hidden, rng);
        p.b_in = Tensor(1, hidden);
        if (act == Activation::PReLU) p.slope_in = Tensor::scalar(0.25);
        for (std::size_t l = 0; l < n_layers; ++l) {
            EncoderLayer layer{glorot(hidden, hidden, rng), glorot(hidden, hidden, rng), Tensor(1, hidden), Tensor()};
            if (act == Activation::PReLU) layer.slope = Tensor::scalar(0.25);
            p.layers.push_back(std::move(layer));
        }
        return p;
    }

    std::size_t input_dim() const { return w_in.rows(); }

    std::vector<Tensor*> tensors() {
        std::vector<Tensor*> v{&w_in, &b_in};
        if (act == Activation::PReLU) v.push_back(&slope_in);
        for (auto& l : layers) {
            v.insert(v.end(), {&l.w_self, &l.w_neigh, &l.bias});
            if (act == Activation::PReLU) v.push_back(&l.slope);
        }
        return v;
    }
    std::vector<const Tensor*> tensors() const {
        std::vector<const Tensor*> v{&w_in, &b_in};
        if (act == Activation::PReLU) v.push_back(&slope_in);
        for (const auto& l : layers) {
            v.insert(v.end(), {&l.w_self, &l.w_neigh, &l.bias});
            if (act == Activation::PReLU) v.push_back(&l.slope);
        }
        return v;
    }
    friend bool operator==(const BackboneParams&, const BackboneParams&) = default;
};

struct TaskModel {
    TaskConfig cfg;
    EncoderParams encoder;  // pre-trained, possibly fine-tuned
    BackboneParams backbone;
    MlpParams head;
    std::optional<GmmPrior> prior;  // GAI only
    std::vector<Real> class_prior;  // classification only
    std::vector<Real> history;      // mean training loss per epoch

    std::size_t embedding_dim() const { return encoder.hidden_dim; }
    friend bool operator==(const TaskModel&, const TaskModel&) = default;
};

namespace task_detail {

inline std::size_t backbone_input_dim(std::size_t emb_dim) { return emb_dim + 4; }

/// [type one-hot | log(1 + degree)] for every node.
inline Tensor structural_inputs(const GraphFeatures& f) {
    Tensor s(f.size(), 4);
    for (std::size_t i = 0; i < f.size(); ++i) {
        s(i, f.types[i]) = 1.0;
        s(i, 3) = f.log_degree[i];
    }
    return s;
}

struct BackboneVars {
    Var w_in, b_in, slope_in;
    std::vector<std::array<Var, 4>> layers;
    Activation act;
    std::vector<Var> all() const {
        std::vector<Var> v{w_in, b_in};
        if (act == Activation::PReLU) v.push_back(slope_in);
        for (const auto& l : layers) {
            v.insert(v.end(), {l[0], l[1], l[2]});
            if (act == Activation::PReLU) v.push_back(l[3]);
        }
        return v;
    }
};

inline BackboneVars bind(Tape& t, const BackboneParams& p, bool trainable) {
    BackboneVars v{t.leaf(p.w_in, trainable), t.leaf(p.b_in, trainable),
                   p.act == Activation::PReLU ? t.leaf(p.slope_in, trainable) : Var(), {}, p.act};
    for (const auto& l : p.layers) {
        v.layers.push_back({t.leaf(l.w_self, trainable), t.leaf(l.w_neigh, trainable), t.leaf(l.bias, trainable),
                            p.act == Activation::PReLU ? t.leaf(l.slope, trainable) : Var()});
    }
    return v;
}

inline Var backbone_forward(Tape& t, const BackboneVars& v, Var x, const AdjacencyView& adj) {
    Var h = activate(t, add_row(t, matmul(t, x, v.w_in), v.b_in), v.act, &v.slope_in);
    for (const auto& L : v.layers) {
        Var z = add(t, matmul(t, h, L[0]), matmul(t, neighbor_mean(t, h, adj), L[1]));
        h = activate(t, add_row(t, z, L[2]), v.act, &L[3]);
    }
    return h;
}

/// Symmetric edge representation [h_u + h_v, |h_u - h_v|].
inline Var edge_input(Tape& t, Var h, std::span<const std::size_t> us, std::span<const std::size_t> vs) {
    Var hu = gather_rows(t, h, us);
    Var hv = gather_rows(t, h, vs);
    return concat_cols(t, add(t, hu, hv), abs(t, sub(t, hu, hv)));
}

/// Backbone node inputs for graph `f`, on the tape. With a trainable encoder
/// the embedding part is recomputed so gradients reach it.
inline Var node_inputs(Tape& t, const GraphFeatures& f, const Tensor& emb, const EncoderVars* enc) {
    Var s = t.constant(structural_inputs(f));
    Var e = enc ? rowwise_l2_normalize(t, encode(t, *enc, f, 0.0, false, 0)) : t.constant(emb);
    return concat_cols(t, e, s);
}

inline void check_embeddings(const EmbeddingMatrix& emb, std::size_t n, std::size_t dim) {
    if (emb.values.rows() != n) {
        throw ArgumentError("embedding rows (" + std::to_string(emb.values.rows()) + ") do not match node count (" +
                            std::to_string(n) + ")");
    }
    if (emb.values.cols() != dim) throw ArgumentError("embedding width does not match the encoder");
}

}  // namespace task_detail

/// Frozen inference embeddings of a design under a pre-trained encoder.
inline EmbeddingMatrix embed(const EncoderParams& encoder, const HomoGraph& g) {
    return {normalize_rows(encode(encoder, g)), true};
}

/// Trains backbone and head on one design. `emb` are the encoder's frozen
/// embeddings of `g` (see embed()).
inline TaskModel train_task(const HomoGraph& g, const EncoderParams& encoder, const EmbeddingMatrix& emb,
                            const TaskLabels& labels, const TaskConfig& cfg) {
    using namespace task_detail;
    cfg.validate();
    check_embeddings(emb, g.n, encoder.hidden_dim);
    const bool edge_task = cfg.task == TaskKind::EdgeRegression;
    const std::size_t n_samples = edge_task ? labels.edges.size() : labels.nodes.size();
    if (n_samples == 0) {
        throw ArgumentError(edge_task ? "no labeled candidate edges to train on" : "no labeled nets to train on");
    }
    for (const auto& e : labels.edges) {
        if (e.u >= g.n || e.v >= g.n) throw ArgumentError("edge label refers to a node outside the graph");
    }
    for (const auto& s : labels.nodes) {
        if (s.node >= g.n) throw ArgumentError("node label refers to a node outside the graph");
        if (s.y >= cfg.n_classes) throw ArgumentError("node label class out of range");
    }

    TaskModel m;
    m.cfg = cfg;
    m.encoder = encoder;
    Rng rng(derive_seed(cfg.seed, 0x7a5c));
    m.backbone = BackboneParams::init(backbone_input_dim(encoder.hidden_dim), cfg.hidden_dim, cfg.n_layers,
                                      cfg.activation, rng);
    const std::size_t head_in = edge_task ? 2 * cfg.hidden_dim : cfg.hidden_dim;
    m.head = MlpParams::init(head_in, cfg.hidden_dim, edge_task ? 1 : cfg.n_classes, cfg.activation, rng);

    if (edge_task && cfg.loss == LossKind::GAI) {
        std::vector<Real> ys;
        for (const auto& e : labels.edges) ys.push_back(e.y);
        const std::set<Real> distinct(ys.begin(), ys.end());
        m.prior = fit_gmm(ys, std::min(cfg.gmm_components, distinct.size()), cfg.seed);
    }
    if (!edge_task) {
        std::vector<std::size_t> ys;
        for (const auto& s : labels.nodes) ys.push_back(s.y);
        m.class_prior = class_prior_from_labels(ys, cfg.n_classes);
    }

    const GraphFeatures f = features_of(g);
    Adam opt(cfg.learning_rate);
    std::vector<std::size_t> order(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle(derive_seed(cfg.seed, 5000 + epoch));
        shuffle.shuffle(order);
        Real epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t b = 0; b < n_samples; b += cfg.batch_size) {
            const std::size_t e = std::min(n_samples, b + cfg.batch_size);
            Tape t;
            std::optional<EncoderVars> ev;
            if (!cfg.freeze_embeddings) ev = circuitgcl::bind(t, m.encoder, true);
            const auto bv = task_detail::bind(t, m.backbone, true);
            const auto hv = circuitgcl::bind(t, m.head, true);
            Var h = backbone_forward(t, bv, node_inputs(t, f, emb.values, ev ? &*ev : nullptr), f.adj);
            Var loss;
            if (edge_task) {
                std::vector<std::size_t> us, vs;
                std::vector<Real> ys;
                for (std::size_t k = b; k < e; ++k) {
                    const auto& s = labels.edges[order[k]];
                    us.push_back(s.u);
                    vs.push_back(s.v);
                    ys.push_back(s.y);
                }
                Var pred = mlp_forward(t, hv, edge_input(t, h, us, vs));
                Var y = t.constant(Tensor::column(ys));
                switch (cfg.loss) {
                    case LossKind::MSE: loss = mse_loss(t, pred, y); break;
                    case LossKind::GAI: loss = gai_loss(t, pred, y, *m.prior, cfg.sigma_noise); break;
                    case LossKind::BMC: loss = bmc_loss(t, pred, y, cfg.sigma_noise); break;
                    default: throw ContractError("classification loss on regression task");
                }
            } else {
                std::vector<std::size_t> ids, ys;
                for (std::size_t k = b; k < e; ++k) {
                    ids.push_back(labels.nodes[order[k]].node);
                    ys.push_back(labels.nodes[order[k]].y);
                }
                Var logits = mlp_forward(t, hv, gather_rows(t, h, ids));
                switch (cfg.loss) {
                    case LossKind::CE: loss = cross_entropy(t, logits, ys); break;
                    case LossKind::Focal: loss = focal_loss(t, logits, ys, cfg.focal_gamma); break;
                    case LossKind::BalancedSoftmaxCE: loss = balanced_softmax_ce(t, logits, ys, m.class_prior); break;
                    default: throw ContractError("regression loss on classification task");
                }
            }
            const Real value = t.scalar(loss);
            if (!std::isfinite(value)) throw TrainingError(epoch, "task loss is not finite");
            t.backward(loss);

            std::vector<Var> vars = bv.all();
            std::vector<Tensor*> params = m.backbone.tensors();
            const auto hvars = hv.all();
            const auto hparams = m.head.tensors();
            vars.insert(vars.end(), hvars.begin(), hvars.end());
            params.insert(params.end(), hparams.begin(), hparams.end());
            if (ev) {
                const auto evars = ev->all();
                const auto eparams = m.encoder.tensors();
                vars.insert(vars.end(), evars.begin(), evars.end());
                params.insert(params.end(), eparams.begin(), eparams.end());
            }
            opt.step(params, gradients(t, vars));
            epoch_loss += value;
            ++batches;
        }
        m.history.push_back(epoch_loss / static_cast<Real>(batches));
    }
    return m;
}

/// Convenience overload: frozen embeddings computed from `encoder`.
inline TaskModel train_task(const HomoGraph& g, const EncoderParams& encoder, const TaskLabels& labels,
                            const TaskConfig& cfg) {
    return train_task(g, encoder, embed(encoder, g), labels, cfg);
}

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

/// Backbone node states of a design (inference mode).
inline Tensor node_states(const TaskModel& m, const HomoGraph& g, const EmbeddingMatrix& emb) {
    task_detail::check_embeddings(emb, g.n, m.embedding_dim());
    const GraphFeatures f = features_of(g);
    Tape t;
    const auto bv = task_detail::bind(t, m.backbone, false);
    return t.value(task_detail::backbone_forward(t, bv, task_detail::node_inputs(t, f, emb.values, nullptr), f.adj));
}

/// Clamped [0, 1] predictions for a list of endpoint pairs.
inline std::vector<Real> predict_edges(const TaskModel& m, const Tensor& states,
                                       std::span<const std::pair<std::uint32_t, std::uint32_t>> pairs) {
    if (m.cfg.task != TaskKind::EdgeRegression) throw ArgumentError("model was not trained for edge regression");
    if (pairs.empty()) return {};
    std::vector<std::size_t> us, vs;
    for (const auto& [u, v] : pairs) {
        if (u >= states.rows() || v >= states.rows()) {
            throw ArgumentError("node id " + std::to_string(std::max(u, v)) + " is outside the graph");
        }
        us.push_back(u);
        vs.push_back(v);
    }
    Tape t;
    const auto hv = bind(t, m.head, false);
    const Tensor out = t.value(mlp_forward(t, hv, task_detail::edge_input(t, t.constant(states), us, vs)));
    std::vector<Real> preds;
    for (Real v : out.data()) preds.push_back(std::clamp(v, 0.0, 1.0));
    return preds;
}

inline Real predict_edge(const TaskModel& m, const HomoGraph& g, const EmbeddingMatrix& emb, std::uint32_t u,
                         std::uint32_t v) {
    if (u >= g.n || v >= g.n) throw ArgumentError("node id " + std::to_string(std::max(u, v)) + " is outside the graph");
    const std::pair<std::uint32_t, std::uint32_t> p{u, v};
    return predict_edges(m, node_states(m, g, emb), std::span(&p, 1))[0];
}

/// Index of the largest logit; ties go to the lowest class id.
inline std::size_t argmax_class(std::span<const Real> logits) {
    if (logits.empty()) throw ArgumentError("argmax over empty logits");
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.size(); ++c) {
        if (logits[c] > logits[best]) best = c;
    }
    return best;
}

/// Raw logits (no prior adjustment) for the given nodes.
inline Tensor node_logits(const TaskModel& m, const Tensor& states, std::span<const std::size_t> nodes) {
    if (m.cfg.task != TaskKind::NodeClassification) throw ArgumentError("model was not trained for node classification");
    for (auto id : nodes) {
        if (id >= states.rows()) throw ArgumentError("node id " + std::to_string(id) + " is outside the graph");
    }
    Tape t;
    const auto hv = bind(t, m.head, false);
    return t.value(mlp_forward(t, hv, gather_rows(t, t.constant(states), nodes)));
}

struct NodePrediction {
    std::size_t cls;
    std::vector<Real> logits;
};

inline NodePrediction predict_node_class(const TaskModel& m, const HomoGraph& g, const EmbeddingMatrix& emb,
                                         std::uint32_t node) {
    if (node >= g.n) throw ArgumentError("node id " + std::to_string(node) + " is outside the graph");
    if (g.x[node] != static_cast<std::uint8_t>(NodeKind::Net)) {
        throw ArgumentError("node " + std::to_string(node) + " is a " +
                            std::string(to_string(static_cast<NodeKind>(g.x[node]))) + ", not a net");
    }
    const std::size_t id = node;
    const Tensor logits = node_logits(m, node_states(m, g, emb), std::span(&id, 1));
    std::vector<Real> l(logits.data().begin(), logits.data().end());
    return {argmax_class(l), l};
}

/// Evaluates a trained model on a (possibly different) labeled design.
inline MetricsReport evaluate(const TaskModel& m, const HomoGraph& g, const TaskLabels& labels) {
    const EmbeddingMatrix emb = embed(m.encoder, g);
    const Tensor states = node_states(m, g, emb);
    MetricsReport r;
    r.task = std::string(to_string(m.cfg.task));
    r.loss = std::string(to_string(m.cfg.loss));
    if (m.cfg.task == TaskKind::EdgeRegression) {
        if (labels.edges.size() < 2) throw ArgumentError("evaluation needs at least two labeled edges");
        std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
        std::vector<Real> ys;
        for (const auto& e : labels.edges) {
            pairs.emplace_back(e.u, e.v);
            ys.push_back(e.y);
        }
        const auto preds = predict_edges(m, states, pairs);
        r.regression = regression_metrics(preds, ys, 5, decades(m.cfg.labels));
        r.loss_value = r.regression->mse;
        Tape t;
        Var p = t.constant(Tensor::column(preds));
        Var y = t.constant(Tensor::column(ys));
        if (m.cfg.loss == LossKind::GAI) r.loss_value = t.scalar(gai_loss(t, p, y, *m.prior, m.cfg.sigma_noise));
        if (m.cfg.loss == LossKind::BMC) r.loss_value = t.scalar(bmc_loss(t, p, y, m.cfg.sigma_noise));
    } else {
        if (labels.nodes.empty()) throw ArgumentError("evaluation needs labeled nets");
        std::vector<std::size_t> ids, ys, preds;
        for (const auto& s : labels.nodes) {
            ids.push_back(s.node);
            ys.push_back(s.y);
        }
        const Tensor logits = node_logits(m, states, ids);
        for (std::size_t i = 0; i < ids.size(); ++i) preds.push_back(argmax_class(logits.row(i)));
        r.classification = classification_metrics(preds, ys, m.cfg.n_classes);
        Tape t;
        Var l = t.constant(logits);
        switch (m.cfg.loss) {
            case LossKind::Focal: r.loss_value = t.scalar(focal_loss(t, l, ys, m.cfg.focal_gamma)); break;
            case LossKind::BalancedSoftmaxCE:
                r.loss_value = t.scalar(balanced_softmax_ce(t, l, ys, m.class_prior));
                break;
            default: r.loss_value = t.scalar(cross_entropy(t, l, ys)); break;
        }
    }
    return r;
}

}  // namespace circuitgcl
