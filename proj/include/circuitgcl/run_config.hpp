#pragma once

#include <charconv>
#include <cstdlib>
#include <optional>
#include <sstream>
#include <string>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "checkpoint.hpp"
#include "synth.hpp"
#include "text_util.hpp"

namespace circuitgcl {

/// Everything a command needs besides paths. Values come from defaults, then
/// an INI file, then command-line overrides.
struct RunConfig {
    std::optional<std::uint64_t> seed;
    SynthConfig synth;
    PretrainConfig pretrain;
    TaskConfig task;
    LabelSpec labels;
};

namespace cfg_detail {

using boost::property_tree::ptree;

/// Shortest text that parses back to the same double.
inline std::string fmt(Real v) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

template <class T>
T parse_value(const std::string& key, const std::string& s);

template <>
inline std::size_t parse_value<std::size_t>(const std::string& key, const std::string& s) {
    std::size_t pos = 0;
    try {
        if (!s.empty() && s[0] == '-') throw std::invalid_argument("negative");
        const auto v = std::stoull(s, &pos);
        if (pos == s.size()) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
    throw ArgumentError("config key '" + key + "': expected a non-negative integer, got '" + s + "'");
}

template <>
inline Real parse_value<Real>(const std::string& key, const std::string& s) {
    std::size_t pos = 0;
    try {
        const Real v = std::stod(s, &pos);
        if (pos == s.size() && std::isfinite(v)) return v;
    } catch (const std::exception&) {
    }
    throw ArgumentError("config key '" + key + "': expected a number, got '" + s + "'");
}

template <>
inline bool parse_value<bool>(const std::string& key, const std::string& s) {
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ArgumentError("config key '" + key + "': expected true or false, got '" + s + "'");
}

}  // namespace cfg_detail

/// Sets one "section.key" value. Unknown keys are usage errors.
inline void set_config_value(RunConfig& rc, const std::string& key, const std::string& value) {
    using cfg_detail::parse_value;
    auto sz = [&] { return parse_value<std::size_t>(key, value); };
    auto real = [&] { return parse_value<Real>(key, value); };
    auto flag = [&] { return parse_value<bool>(key, value); };

    if (key == "run.seed") rc.seed = parse_value<std::size_t>(key, value);
    else if (key == "synth.cells") rc.synth.n_cells = sz();
    else if (key == "synth.coupling_density") rc.synth.coupling_density = real();
    else if (key == "synth.noise_sigma") rc.synth.noise_sigma = real();
    else if (key == "synth.cell_mix") {
        std::vector<Real> mix;
        std::stringstream ss(value);
        std::string part;
        while (std::getline(ss, part, ',')) mix.push_back(parse_value<Real>(key, std::string(text::trim(part))));
        if (mix.size() != rc.synth.cell_mix.size()) {
            throw ArgumentError("config key 'synth.cell_mix': expected " + std::to_string(rc.synth.cell_mix.size()) +
                                " comma-separated weights");
        }
        std::copy(mix.begin(), mix.end(), rc.synth.cell_mix.begin());
    }
    else if (key == "labels.lo") rc.labels.lo = real();
    else if (key == "labels.hi") rc.labels.hi = real();
    else if (key == "pretrain.hidden_dim") rc.pretrain.hidden_dim = sz();
    else if (key == "pretrain.n_layers") rc.pretrain.n_layers = sz();
    else if (key == "pretrain.activation") rc.pretrain.activation = parse_activation(value);
    else if (key == "pretrain.dropout") rc.pretrain.dropout = real();
    else if (key == "pretrain.ema_tau") rc.pretrain.ema_tau = real();
    else if (key == "pretrain.scatter_weight") rc.pretrain.scatter_weight = real();
    else if (key == "pretrain.epochs") rc.pretrain.epochs = sz();
    else if (key == "pretrain.learning_rate") rc.pretrain.learning_rate = real();
    else if (key == "pretrain.eps") rc.pretrain.eps = real();
    else if (key == "pretrain.ema_per_step") rc.pretrain.ema_per_step = flag();
    else if (key == "pretrain.batch_node_threshold") rc.pretrain.batch_node_threshold = sz();
    else if (key == "pretrain.batch_anchors") rc.pretrain.batch_anchors = sz();
    else if (key == "pretrain.hops") rc.pretrain.hops = sz();
    else if (key == "pretrain.fanout") rc.pretrain.fanout = sz();
    else if (key == "task.task") rc.task.task = parse_task_kind(value);
    else if (key == "task.loss") rc.task.loss = parse_loss_kind(value);
    else if (key == "task.hidden_dim") rc.task.hidden_dim = sz();
    else if (key == "task.n_layers") rc.task.n_layers = sz();
    else if (key == "task.activation") rc.task.activation = parse_activation(value);
    else if (key == "task.epochs") rc.task.epochs = sz();
    else if (key == "task.learning_rate") rc.task.learning_rate = real();
    else if (key == "task.batch_size") rc.task.batch_size = sz();
    else if (key == "task.sigma_noise") rc.task.sigma_noise = real();
    else if (key == "task.gmm_components") rc.task.gmm_components = sz();
    else if (key == "task.focal_gamma") rc.task.focal_gamma = real();
    else if (key == "task.n_classes") rc.task.n_classes = sz();
    else if (key == "task.freeze_embeddings") rc.task.freeze_embeddings = flag();
    else throw ArgumentError("unknown config key '" + key + "'");
}

/// Applies every key of an INI document (sections map to key prefixes).
inline void apply_ini(RunConfig& rc, const std::string& text) {
    boost::property_tree::ptree pt;
    std::istringstream in(text);
    try {
        boost::property_tree::ini_parser::read_ini(in, pt);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ArgumentError("config line " + std::to_string(e.line()) + ": " + e.message());
    }
    for (const auto& [section, body] : pt) {
        if (body.empty()) throw ArgumentError("config key '" + section + "' is outside any section");
        for (const auto& [key, node] : body) set_config_value(rc, section + "." + key, node.data());
    }
}

/// Seed from the config, else CIRCUITGCL_SEED, else an error.
inline std::uint64_t resolve_seed(RunConfig& rc) {
    if (!rc.seed) {
        if (const char* env = std::getenv("CIRCUITGCL_SEED"); env && *env) {
            rc.seed = cfg_detail::parse_value<std::size_t>("CIRCUITGCL_SEED", env);
        }
    }
    if (!rc.seed) throw ArgumentError("no seed given: pass --seed, set run.seed, or export CIRCUITGCL_SEED");
    rc.synth.seed = *rc.seed;
    rc.pretrain.seed = *rc.seed;
    rc.task.seed = *rc.seed;
    rc.synth.labels = rc.labels;
    rc.task.labels = rc.labels;
    return *rc.seed;
}

/// The fully resolved configuration as INI text.
inline std::string resolved_ini(const RunConfig& rc) {
    using cfg_detail::fmt;
    boost::property_tree::ptree pt;
    if (rc.seed) pt.put("run.seed", *rc.seed);
    pt.put("labels.lo", fmt(rc.labels.lo));
    pt.put("labels.hi", fmt(rc.labels.hi));
    pt.put("synth.cells", rc.synth.n_cells);
    std::string mix;
    for (std::size_t i = 0; i < rc.synth.cell_mix.size(); ++i) mix += (i ? "," : "") + fmt(rc.synth.cell_mix[i]);
    pt.put("synth.cell_mix", mix);
    pt.put("synth.coupling_density", fmt(rc.synth.coupling_density));
    pt.put("synth.noise_sigma", fmt(rc.synth.noise_sigma));
    const auto& p = rc.pretrain;
    pt.put("pretrain.hidden_dim", p.hidden_dim);
    pt.put("pretrain.n_layers", p.n_layers);
    pt.put("pretrain.activation", std::string(to_string(p.activation)));
    pt.put("pretrain.dropout", fmt(p.dropout));
    pt.put("pretrain.ema_tau", fmt(p.ema_tau));
    pt.put("pretrain.scatter_weight", fmt(p.scatter_weight));
    pt.put("pretrain.epochs", p.epochs);
    pt.put("pretrain.learning_rate", fmt(p.learning_rate));
    pt.put("pretrain.eps", fmt(p.eps));
    pt.put("pretrain.ema_per_step", p.ema_per_step ? "true" : "false");
    pt.put("pretrain.batch_node_threshold", p.batch_node_threshold);
    pt.put("pretrain.batch_anchors", p.batch_anchors);
    pt.put("pretrain.hops", p.hops);
    pt.put("pretrain.fanout", p.fanout);
    const auto& t = rc.task;
    pt.put("task.task", std::string(to_string(t.task)));
    pt.put("task.loss", std::string(to_string(t.loss)));
    pt.put("task.hidden_dim", t.hidden_dim);
    pt.put("task.n_layers", t.n_layers);
    pt.put("task.activation", std::string(to_string(t.activation)));
    pt.put("task.epochs", t.epochs);
    pt.put("task.learning_rate", fmt(t.learning_rate));
    pt.put("task.batch_size", t.batch_size);
    pt.put("task.sigma_noise", fmt(t.sigma_noise));
    pt.put("task.gmm_components", t.gmm_components);
    pt.put("task.focal_gamma", fmt(t.focal_gamma));
    pt.put("task.n_classes", t.n_classes);
    pt.put("task.freeze_embeddings", t.freeze_embeddings ? "true" : "false");
    std::ostringstream out;
    boost::property_tree::ini_parser::write_ini(out, pt);
    return out.str();
}

}  // namespace circuitgcl
