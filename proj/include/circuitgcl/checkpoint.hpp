#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "binary_io.hpp"
#include "gmm.hpp"
#include "rsm.hpp"
#include "task.hpp"

namespace circuitgcl {

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace ckpt_tags {
inline constexpr std::uint32_t kConfig = fourcc("CONF");
inline constexpr std::uint32_t kTheta = fourcc("THTA");
inline constexpr std::uint32_t kPhi = fourcc("PHI_");
inline constexpr std::uint32_t kPredictor = fourcc("PRED");
inline constexpr std::uint32_t kEncoder = fourcc("ENCO");
inline constexpr std::uint32_t kBackbone = fourcc("BACK");
inline constexpr std::uint32_t kHead = fourcc("HEAD");
}  // namespace ckpt_tags

namespace ckpt_detail {

inline Bytes write_tensors(const std::vector<const Tensor*>& ts) {
    ByteWriter w;
    w.u64(ts.size());
    for (const Tensor* t : ts) {
        w.u64(t->rows());
        w.u64(t->cols());
        for (Real v : t->data()) w.f64(v);
    }
    return w.take();
}

/// Fills `dst` in order; shapes must match the freshly initialized model.
inline void read_tensors(const Container& c, std::uint32_t tag, const char* name, const std::vector<Tensor*>& dst) {
    ByteReader r(section(c, tag, name), section_offset(c, tag));
    const auto n = r.count(16, name);
    if (n != dst.size()) {
        throw FormatError(section_offset(c, tag), std::string(name) + " holds " + std::to_string(n) +
                                                      " tensors, architecture expects " + std::to_string(dst.size()));
    }
    for (Tensor* t : dst) {
        const auto at = r.offset();
        const auto rows = r.u64();
        const auto cols = r.u64();
        if (rows != t->rows() || cols != t->cols()) {
            throw FormatError(at, std::string(name) + " tensor shape does not match the configured architecture");
        }
        for (Real& v : t->data()) v = r.f64();
    }
    r.expect_done(name);
}

inline nlohmann::json read_config(const Container& c) {
    const Bytes& b = section(c, ckpt_tags::kConfig, "config");
    try {
        return nlohmann::json::parse(b.begin(), b.end());
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(section_offset(c, ckpt_tags::kConfig), std::string("config section: ") + e.what());
    }
}

inline Bytes json_bytes(const nlohmann::ordered_json& j) {
    const std::string s = j.dump();
    return Bytes(s.begin(), s.end());
}

inline EncoderParams encoder_shell(std::size_t hidden, std::size_t layers, Activation act, Real dropout) {
    Rng rng(0);
    return EncoderParams::init(hidden, layers, act, dropout, rng);
}

}  // namespace ckpt_detail

// ---------------------------------------------------------------------------
// JSON forms of the configs (also used for resolved-config snapshots)
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json to_json(const PretrainConfig& c) {
    return {{"hidden_dim", c.hidden_dim},
            {"n_layers", c.n_layers},
            {"activation", to_string(c.activation)},
            {"dropout", c.dropout},
            {"ema_tau", c.ema_tau},
            {"scatter_weight", c.scatter_weight},
            {"epochs", c.epochs},
            {"learning_rate", c.learning_rate},
            {"eps", c.eps},
            {"ema_per_step", c.ema_per_step},
            {"batch_node_threshold", c.batch_node_threshold},
            {"batch_anchors", c.batch_anchors},
            {"hops", c.hops},
            {"fanout", c.fanout},
            {"seed", c.seed}};
}

inline PretrainConfig pretrain_config_from_json(const nlohmann::json& j) {
    PretrainConfig c;
    c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
    c.n_layers = j.at("n_layers").get<std::size_t>();
    c.activation = parse_activation(j.at("activation").get<std::string>());
    c.dropout = j.at("dropout").get<Real>();
    c.ema_tau = j.at("ema_tau").get<Real>();
    c.scatter_weight = j.at("scatter_weight").get<Real>();
    c.epochs = j.at("epochs").get<std::size_t>();
    c.learning_rate = j.at("learning_rate").get<Real>();
    c.eps = j.at("eps").get<Real>();
    c.ema_per_step = j.at("ema_per_step").get<bool>();
    c.batch_node_threshold = j.at("batch_node_threshold").get<std::size_t>();
    c.batch_anchors = j.at("batch_anchors").get<std::size_t>();
    c.hops = j.at("hops").get<std::size_t>();
    c.fanout = j.at("fanout").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

inline nlohmann::ordered_json to_json(const TaskConfig& c) {
    return {{"task", to_string(c.task)},
            {"loss", to_string(c.loss)},
            {"hidden_dim", c.hidden_dim},
            {"n_layers", c.n_layers},
            {"activation", to_string(c.activation)},
            {"epochs", c.epochs},
            {"learning_rate", c.learning_rate},
            {"batch_size", c.batch_size},
            {"sigma_noise", c.sigma_noise},
            {"gmm_components", c.gmm_components},
            {"focal_gamma", c.focal_gamma},
            {"n_classes", c.n_classes},
            {"freeze_embeddings", c.freeze_embeddings},
            {"label_lo", c.labels.lo},
            {"label_hi", c.labels.hi},
            {"seed", c.seed}};
}

inline TaskConfig task_config_from_json(const nlohmann::json& j) {
    TaskConfig c;
    c.task = parse_task_kind(j.at("task").get<std::string>());
    c.loss = parse_loss_kind(j.at("loss").get<std::string>());
    c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
    c.n_layers = j.at("n_layers").get<std::size_t>();
    c.activation = parse_activation(j.at("activation").get<std::string>());
    c.epochs = j.at("epochs").get<std::size_t>();
    c.learning_rate = j.at("learning_rate").get<Real>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.sigma_noise = j.at("sigma_noise").get<Real>();
    c.gmm_components = j.at("gmm_components").get<std::size_t>();
    c.focal_gamma = j.at("focal_gamma").get<Real>();
    c.n_classes = j.at("n_classes").get<std::size_t>();
    c.freeze_embeddings = j.at("freeze_embeddings").get<bool>();
    c.labels.lo = j.at("label_lo").get<Real>();
    c.labels.hi = j.at("label_hi").get<Real>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

// ---------------------------------------------------------------------------
// Pre-training checkpoint (CGLP)
// ---------------------------------------------------------------------------

struct PretrainCheckpoint {
    PretrainConfig cfg;
    EncoderParams theta;
    EncoderParams phi;
    MlpParams predictor;
    std::vector<PretrainEpoch> history;
    friend bool operator==(const PretrainCheckpoint& a, const PretrainCheckpoint& b) {
        return a.theta == b.theta && a.phi == b.phi && a.predictor == b.predictor;
    }
};

inline Bytes serialize_pretrain(const PretrainCheckpoint& p) {
    using namespace ckpt_tags;
    nlohmann::ordered_json conf;
    conf["config"] = to_json(p.cfg);
    auto hist = nlohmann::ordered_json::array();
    for (const auto& e : p.history) hist.push_back({e.loss, e.alignment, e.scattering});
    conf["history"] = hist;
    Container c{"CGLP", kCheckpointVersion, {}};
    c.sections[kConfig] = ckpt_detail::json_bytes(conf);
    c.sections[kTheta] = ckpt_detail::write_tensors(p.theta.tensors());
    c.sections[kPhi] = ckpt_detail::write_tensors(p.phi.tensors());
    c.sections[kPredictor] = ckpt_detail::write_tensors(p.predictor.tensors());
    return write_container(c);
}

inline PretrainCheckpoint deserialize_pretrain(std::span<const std::uint8_t> bytes) {
    using namespace ckpt_tags;
    const Container c = read_container(bytes, "CGLP", kCheckpointVersion);
    const auto conf = ckpt_detail::read_config(c);
    PretrainCheckpoint p;
    try {
        p.cfg = pretrain_config_from_json(conf.at("config"));
        for (const auto& e : conf.at("history")) p.history.push_back({e.at(0), e.at(1), e.at(2)});
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(section_offset(c, kConfig), std::string("config section: ") + e.what());
    }
    p.theta = ckpt_detail::encoder_shell(p.cfg.hidden_dim, p.cfg.n_layers, p.cfg.activation, p.cfg.dropout);
    p.phi = p.theta;
    Rng rng(0);
    p.predictor = MlpParams::init(p.cfg.hidden_dim, p.cfg.hidden_dim, p.cfg.hidden_dim, p.cfg.activation, rng);
    ckpt_detail::read_tensors(c, kTheta, "online encoder", p.theta.tensors());
    ckpt_detail::read_tensors(c, kPhi, "target encoder", p.phi.tensors());
    ckpt_detail::read_tensors(c, kPredictor, "predictor", p.predictor.tensors());
    return p;
}

// ---------------------------------------------------------------------------
// Task checkpoint (CGLT)
// ---------------------------------------------------------------------------

inline Bytes serialize_task(const TaskModel& m) {
    using namespace ckpt_tags;
    nlohmann::ordered_json conf;
    conf["config"] = to_json(m.cfg);
    conf["encoder"] = {{"hidden_dim", m.encoder.hidden_dim},
                       {"n_layers", m.encoder.n_layers()},
                       {"activation", to_string(m.encoder.act)},
                       {"dropout", m.encoder.dropout}};
    conf["gmm_prior"] = m.prior ? gmm_to_json(*m.prior) : nlohmann::ordered_json(nullptr);
    conf["class_prior"] = m.class_prior;
    conf["history"] = m.history;
    Container c{"CGLT", kCheckpointVersion, {}};
    c.sections[kConfig] = ckpt_detail::json_bytes(conf);
    c.sections[kEncoder] = ckpt_detail::write_tensors(m.encoder.tensors());
    c.sections[kBackbone] = ckpt_detail::write_tensors(m.backbone.tensors());
    c.sections[kHead] = ckpt_detail::write_tensors(m.head.tensors());
    return write_container(c);
}

inline TaskModel deserialize_task(std::span<const std::uint8_t> bytes) {
    using namespace ckpt_tags;
    const Container c = read_container(bytes, "CGLT", kCheckpointVersion);
    const auto conf = ckpt_detail::read_config(c);
    TaskModel m;
    try {
        m.cfg = task_config_from_json(conf.at("config"));
        const auto& e = conf.at("encoder");
        m.encoder = ckpt_detail::encoder_shell(e.at("hidden_dim"), e.at("n_layers"),
                                               parse_activation(e.at("activation").get<std::string>()),
                                               e.at("dropout").get<Real>());
        if (!conf.at("gmm_prior").is_null()) m.prior = gmm_from_json(conf.at("gmm_prior"));
        m.class_prior = conf.at("class_prior").get<std::vector<Real>>();
        m.history = conf.at("history").get<std::vector<Real>>();
    } catch (const nlohmann::json::exception& ex) {
        throw FormatError(section_offset(c, kConfig), std::string("config section: ") + ex.what());
    }
    Rng rng(0);
    const bool edge = m.cfg.task == TaskKind::EdgeRegression;
    m.backbone = BackboneParams::init(task_detail::backbone_input_dim(m.encoder.hidden_dim), m.cfg.hidden_dim,
                                      m.cfg.n_layers, m.cfg.activation, rng);
    m.head = MlpParams::init(edge ? 2 * m.cfg.hidden_dim : m.cfg.hidden_dim, m.cfg.hidden_dim,
                             edge ? 1 : m.cfg.n_classes, m.cfg.activation, rng);
    ckpt_detail::read_tensors(c, kEncoder, "encoder", m.encoder.tensors());
    ckpt_detail::read_tensors(c, kBackbone, "backbone", m.backbone.tensors());
    ckpt_detail::read_tensors(c, kHead, "head", m.head.tensors());
    return m;
}

}  // namespace circuitgcl
