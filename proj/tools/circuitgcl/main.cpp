// circuitgcl command-line entry point.
//
// Exit codes: 0 success, 1 verification or training failure, 2 usage error,
// 3 I/O or input-format error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <circuitgcl/checkpoint.hpp>
#include <circuitgcl/graph_io.hpp>
#include <circuitgcl/netlist_parser.hpp>
#include <circuitgcl/oracles.hpp>
#include <circuitgcl/report.hpp>
#include <circuitgcl/run_config.hpp>
#include <circuitgcl/runtime.hpp>
#include <circuitgcl/spf_parser.hpp>
#include <circuitgcl/synth.hpp>
#include <circuitgcl/task.hpp>

namespace cg = circuitgcl;
using ojson = nlohmann::ordered_json;

namespace {

enum Exit : int { kOk = 0, kVerifyFailed = 1, kUsage = 2, kIo = 3 };

/// Options shared by every subcommand: config file, seed and free-form
/// `section.key=value` overrides. Dedicated flags are recorded as overrides
/// too, so all values pass through the same parser.
struct Common {
    std::string config_path;
    std::vector<std::pair<std::string, std::string>> overrides;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("-c,--config", c.config_path, "INI config file ([run] [synth] [pretrain] [task] [labels])");
    sub->add_option_function<std::string>(
        "--seed", [&c](const std::string& v) { c.overrides.emplace_back("run.seed", v); },
        "Run seed (falls back to CIRCUITGCL_SEED)");
    sub->add_option_function<std::vector<std::string>>(
           "--set",
           [&c](const std::vector<std::string>& vs) {
               for (const auto& v : vs) {
                   const auto eq = v.find('=');
                   if (eq == std::string::npos) throw CLI::ValidationError("--set", "expected section.key=value, got " + v);
                   c.overrides.emplace_back(v.substr(0, eq), v.substr(eq + 1));
               }
           },
           "Override any config key, e.g. --set task.epochs=20")
        ->take_all();
}

void add_flag_override(CLI::App* sub, Common& c, const std::string& flag, const std::string& key,
                       const std::string& help) {
    sub->add_option_function<std::string>(
        flag, [&c, key](const std::string& v) { c.overrides.emplace_back(key, v); }, help);
}

cg::RunConfig resolve(const Common& c, bool need_seed) {
    cg::RunConfig rc;
    if (!c.config_path.empty()) cg::apply_ini(rc, cg::read_text_file(c.config_path));
    for (const auto& [k, v] : c.overrides) cg::set_config_value(rc, k, v);
    if (need_seed) {
        cg::resolve_seed(rc);
    } else {
        rc.synth.labels = rc.labels;
        rc.task.labels = rc.labels;
    }
    return rc;
}

void write_snapshot(const std::string& output, const cg::RunConfig& rc) {
    cg::write_text_file(output + ".config.ini", cg::resolved_ini(rc));
}

void write_reports(const std::string& base, const std::string& command, ojson payload, const std::string& text) {
    const ojson report = cg::make_report(command, std::move(payload));
    cg::write_text_file(base + ".json", report.dump(2) + "\n");
    cg::write_text_file(base + ".txt", text);
}

std::string report_base(const std::string& output, const std::string& explicit_report) {
    if (explicit_report.empty()) return output + ".report";
    const std::filesystem::path p(explicit_report);
    return p.extension() == ".json" ? (p.parent_path() / p.stem()).string() : explicit_report;
}

ojson graph_summary(const cg::GraphBundle& b) {
    std::size_t nodes[3] = {0, 0, 0};
    for (auto t : b.graph.x) ++nodes[t];
    std::map<std::string, std::size_t> cand, labeled;
    for (const auto& c : b.candidates) {
        const std::string k(cg::to_string(c.kind));
        ++cand[k];
        if (c.farads) ++labeled[k];
    }
    std::size_t ground = 0;
    for (const auto& [id, v] : b.ground) ground += v.has_value();
    ojson j;
    j["nodes"] = {{"net", nodes[0]}, {"device", nodes[1]}, {"pin", nodes[2]}, {"total", b.graph.n}};
    j["homogeneous_edges"] = b.graph.edge_count();
    ojson ce;
    for (auto k : {cg::CouplingKind::PinNet, cg::CouplingKind::PinPin, cg::CouplingKind::NetNet}) {
        const std::string s(cg::to_string(k));
        ce[s] = {{"candidates", cand[s]}, {"labeled", labeled[s]}};
    }
    j["coupling"] = ce;
    j["ground_caps"] = ground;
    return j;
}

std::string graph_summary_text(const ojson& s) {
    char buf[256];
    std::string out;
    std::snprintf(buf, sizeof buf, "nodes: %zu (net %zu, device %zu, pin %zu)\nhomogeneous edges: %zu\n",
                  s["nodes"]["total"].get<std::size_t>(), s["nodes"]["net"].get<std::size_t>(),
                  s["nodes"]["device"].get<std::size_t>(), s["nodes"]["pin"].get<std::size_t>(),
                  s["homogeneous_edges"].get<std::size_t>());
    out += buf;
    for (const auto& [k, v] : s["coupling"].items()) {
        std::snprintf(buf, sizeof buf, "coupling %-8s candidates %-7zu labeled %zu\n", k.c_str(),
                      v["candidates"].get<std::size_t>(), v["labeled"].get<std::size_t>());
        out += buf;
    }
    std::snprintf(buf, sizeof buf, "ground caps labeled: %zu\n", s["ground_caps"].get<std::size_t>());
    out += buf;
    return out;
}

cg::GraphBundle load_graph(const std::string& path) { return cg::deserialize_bundle(cg::read_file(path)); }

// ---------------------------------------------------------------------------

struct IngestArgs {
    std::string netlist, spf, output;
};

int cmd_ingest(const Common& c, const IngestArgs& a) {
    const cg::RunConfig rc = resolve(c, false);
    cg::CircuitGraph g;
    std::vector<cg::Diagnostic> warnings;
    std::string current = a.netlist;
    try {
        g = cg::parse_netlist(cg::read_text_file(a.netlist), &warnings);
        if (!a.spf.empty()) {
            current = a.spf;
            g = cg::parse_spf_labels(cg::read_text_file(a.spf), g);
        }
    } catch (const cg::ParseError& e) {
        std::cerr << current << ":" << e.what() << "\n";
        return kIo;
    } catch (const cg::ReferenceError& e) {
        std::cerr << current << ":" << e.what() << "\n";
        return kIo;
    }
    for (const auto& w : warnings) std::cerr << a.netlist << ":line " << w.line << ": warning: " << w.message << "\n";
    g.validate();
    const cg::GraphBundle b = cg::make_bundle(g);
    cg::write_file(a.output, cg::serialize_bundle(b));
    write_snapshot(a.output, rc);
    std::cout << graph_summary_text(graph_summary(b));
    return kOk;
}

struct SynthArgs {
    std::string output;
};

int cmd_synth(const Common& c, const SynthArgs& a) {
    const cg::RunConfig rc = resolve(c, true);
    const cg::GraphBundle b = cg::make_bundle(cg::synth_generate(rc.synth));
    cg::write_file(a.output, cg::serialize_bundle(b));
    write_snapshot(a.output, rc);
    std::cout << graph_summary_text(graph_summary(b));
    return kOk;
}

struct PretrainArgs {
    std::string graph, output, embeddings, report;
};

int cmd_pretrain(const Common& c, const PretrainArgs& a) {
    const cg::RunConfig rc = resolve(c, true);
    rc.pretrain.validate();
    const cg::GraphBundle b = load_graph(a.graph);
    const auto init = cg::init_pretrain_state(rc.pretrain);
    const double mpd_init = cg::mean_pairwise_distance(cg::normalize_rows(cg::encode(init.theta, b.graph), rc.pretrain.eps));
    cg::PretrainResult r = cg::pretrain(b.graph, rc.pretrain);
    const double mpd_final = cg::mean_pairwise_distance(r.embeddings.values);

    cg::PretrainCheckpoint ck{rc.pretrain, std::move(r.theta), std::move(r.phi), std::move(r.predictor), r.history};
    cg::write_file(a.output, cg::serialize_pretrain(ck));
    if (!a.embeddings.empty()) cg::export_embeddings(r.embeddings, a.embeddings);
    write_snapshot(a.output, rc);

    ojson payload;
    payload["config"] = cg::to_json(rc.pretrain);
    payload["graph"] = graph_summary(b);
    auto hist = ojson::array();
    for (const auto& e : r.history) hist.push_back({{"loss", e.loss}, {"alignment", e.alignment}, {"scattering", e.scattering}});
    payload["history"] = hist;
    payload["mean_pairwise_distance"] = {{"initial", mpd_init}, {"final", mpd_final}};

    char buf[256];
    std::string text = "pretrain\n";
    for (std::size_t i = 0; i < r.history.size(); ++i) {
        const auto& e = r.history[i];
        std::snprintf(buf, sizeof buf, "epoch %-4zu loss %10.6f  align %10.6f  scatter %10.6f\n", i + 1, e.loss,
                      e.alignment, e.scattering);
        text += buf;
    }
    std::snprintf(buf, sizeof buf, "mean pairwise distance: %.6f -> %.6f\n", mpd_init, mpd_final);
    text += buf;
    write_reports(report_base(a.output, a.report), "pretrain", std::move(payload), text);
    std::cout << text;
    return kOk;
}

ojson labels_summary(const cg::TaskLabels& l, cg::TaskKind k) {
    return {{"samples", k == cg::TaskKind::EdgeRegression ? l.edges.size() : l.nodes.size()}, {"dropped", l.dropped}};
}

struct TrainArgs {
    std::string graph, pretrained, output, report;
};

int cmd_train(const Common& c, const TrainArgs& a) {
    const cg::RunConfig rc = resolve(c, true);
    rc.task.validate();
    const cg::GraphBundle b = load_graph(a.graph);
    const cg::PretrainCheckpoint ck = cg::deserialize_pretrain(cg::read_file(a.pretrained));
    const cg::TaskLabels labels = cg::extract_labels(b, rc.labels, rc.task.n_classes);
    const cg::TaskModel m = cg::train_task(b.graph, ck.theta, labels, rc.task);
    cg::write_file(a.output, cg::serialize_task(m));
    write_snapshot(a.output, rc);

    cg::MetricsReport fit = cg::evaluate(m, b.graph, labels);
    ojson payload;
    payload["config"] = cg::to_json(rc.task);
    payload["labels"] = labels_summary(labels, rc.task.task);
    payload["history"] = m.history;
    payload["train_metrics"] = cg::to_json(fit);
    std::string text = "train (metrics on the training design)\n" + cg::to_text(fit);
    write_reports(report_base(a.output, a.report), "train", std::move(payload), text);
    std::cout << text;
    return kOk;
}

struct EvalArgs {
    std::string graph, model, report;
};

int cmd_eval(const Common& c, const EvalArgs& a) {
    cg::RunConfig rc = resolve(c, false);
    const cg::TaskModel m = cg::deserialize_task(cg::read_file(a.model));
    const cg::GraphBundle b = load_graph(a.graph);
    const cg::TaskLabels labels = cg::extract_labels(b, m.cfg.labels, m.cfg.n_classes);
    const cg::MetricsReport r = cg::evaluate(m, b.graph, labels);
    rc.task = m.cfg;
    rc.labels = m.cfg.labels;
    const std::string base = report_base(a.model + ".eval", a.report);
    write_snapshot(base, rc);

    ojson payload;
    payload["model_config"] = cg::to_json(m.cfg);
    payload["labels"] = labels_summary(labels, m.cfg.task);
    payload["metrics"] = cg::to_json(r);
    const std::string text = cg::to_text(r);
    write_reports(base, "eval", std::move(payload), text);
    std::cout << text;
    return kOk;
}

struct GradcheckArgs {
    double tolerance = 1e-4;
    std::size_t points = 10;
    std::uint64_t oracle_seed = 0;
    bool inject_bug = false;
    std::string report;
};

int cmd_gradcheck(const GradcheckArgs& a) {
    if (!(a.tolerance > 0.0)) throw cg::ArgumentError("--tolerance must be positive");
    cg::debug::gradient_fault() = a.inject_bug;
    std::vector<cg::OracleResult> all;
    for (auto& r : cg::primitive_gradchecks(a.tolerance, a.points, a.oracle_seed)) all.push_back(std::move(r));
    for (auto& r : cg::loss_gradchecks(a.tolerance, a.points, a.oracle_seed)) all.push_back(std::move(r));
    all.push_back(cg::gai_quadrature_oracle(1e-6, 100, a.oracle_seed));
    for (auto& r : cg::reduction_oracles(a.oracle_seed)) all.push_back(std::move(r));
    cg::debug::gradient_fault() = false;

    char buf[256];
    std::string text;
    std::snprintf(buf, sizeof buf, "%-40s %12s %12s %6s\n", "check", "worst", "tolerance", "result");
    text += buf;
    auto rows = ojson::array();
    for (const auto& r : all) {
        std::snprintf(buf, sizeof buf, "%-40s %12.3e %12.3e %6s\n", r.name.c_str(), r.worst, r.tolerance,
                      r.pass ? "pass" : "FAIL");
        text += buf;
        rows.push_back({{"name", r.name}, {"worst", r.worst}, {"tolerance", r.tolerance}, {"pass", r.pass}});
    }
    const bool ok = cg::all_pass(all);
    text += ok ? "all checks passed\n" : "some checks FAILED\n";
    std::cout << text;
    if (!a.report.empty()) {
        ojson payload;
        payload["tolerance"] = a.tolerance;
        payload["points"] = a.points;
        payload["oracle_seed"] = a.oracle_seed;
        payload["inject_bug"] = a.inject_bug;
        payload["checks"] = rows;
        payload["pass"] = ok;
        write_reports(report_base("", a.report), "gradcheck", std::move(payload), text);
    }
    return ok ? kOk : kVerifyFailed;
}

}  // namespace

int main(int argc, char** argv) {
    cg::configure_allocator();
    CLI::App app{"circuitgcl: circuit graphs, contrastive pre-training and rebalanced parasitic estimation"};
    app.require_subcommand(1);
    Common common;

    IngestArgs ingest;
    auto* s_ingest = app.add_subcommand("ingest", "Parse a netlist (and optional SPF) into a graph file");
    add_common(s_ingest, common);
    s_ingest->add_option("--netlist", ingest.netlist, "SPICE-subset netlist")->required();
    s_ingest->add_option("--spf", ingest.spf, "SPF-subset parasitics for labels");
    s_ingest->add_option("-o,--output", ingest.output, "Output graph file")->required();

    SynthArgs synth;
    auto* s_synth = app.add_subcommand("synth", "Generate a seeded synthetic labeled design");
    add_common(s_synth, common);
    add_flag_override(s_synth, common, "--cells", "synth.cells", "Number of cells");
    add_flag_override(s_synth, common, "--coupling-density", "synth.coupling_density", "Candidate density in (0, 1]");
    add_flag_override(s_synth, common, "--noise-sigma", "synth.noise_sigma", "Label noise on the normalized axis");
    add_flag_override(s_synth, common, "--cell-mix", "synth.cell_mix", "Weights inverter,nand,sram,analog");
    s_synth->add_option("-o,--output", synth.output, "Output graph file")->required();

    PretrainArgs pre;
    auto* s_pre = app.add_subcommand("pretrain", "Contrastive pre-training of the node encoder");
    add_common(s_pre, common);
    s_pre->add_option("--graph", pre.graph, "Input graph file")->required();
    s_pre->add_option("-o,--output", pre.output, "Output encoder checkpoint")->required();
    s_pre->add_option("--embeddings", pre.embeddings, "Also write normalized embeddings as CSV");
    s_pre->add_option("--report", pre.report, "Report base path (default <output>.report)");
    add_flag_override(s_pre, common, "--epochs", "pretrain.epochs", "Epochs");
    add_flag_override(s_pre, common, "--lr", "pretrain.learning_rate", "SGD learning rate");
    add_flag_override(s_pre, common, "--hidden", "pretrain.hidden_dim", "Embedding width");
    add_flag_override(s_pre, common, "--layers", "pretrain.n_layers", "Encoder depth");

    TrainArgs train;
    auto* s_train = app.add_subcommand("train", "Train a downstream head on pre-trained embeddings");
    add_common(s_train, common);
    s_train->add_option("--graph", train.graph, "Training graph file")->required();
    s_train->add_option("--pretrained", train.pretrained, "Encoder checkpoint from pretrain")->required();
    s_train->add_option("-o,--output", train.output, "Output model checkpoint")->required();
    s_train->add_option("--report", train.report, "Report base path (default <output>.report)");
    add_flag_override(s_train, common, "--task", "task.task", "edge | node");
    add_flag_override(s_train, common, "--loss", "task.loss", "mse|gai|bmc for edge, ce|focal|bsmce for node");
    add_flag_override(s_train, common, "--epochs", "task.epochs", "Epochs");
    add_flag_override(s_train, common, "--lr", "task.learning_rate", "Adam learning rate");
    add_flag_override(s_train, common, "--batch", "task.batch_size", "Mini-batch size");
    add_flag_override(s_train, common, "--sigma", "task.sigma_noise", "Label-noise sigma for gai/bmc");
    s_train->add_flag_callback(
        "--fine-tune", [&common] { common.overrides.emplace_back("task.freeze_embeddings", "false"); },
        "Update the encoder along with the head");

    EvalArgs ev;
    auto* s_eval = app.add_subcommand("eval", "Evaluate a trained model on a held-out graph");
    add_common(s_eval, common);
    s_eval->add_option("--graph", ev.graph, "Evaluation graph file")->required();
    s_eval->add_option("--model", ev.model, "Model checkpoint from train")->required();
    s_eval->add_option("--report", ev.report, "Report base path (default <model>.eval.report)");

    GradcheckArgs gc;
    auto* s_gc = app.add_subcommand("gradcheck", "Run the finite-difference, quadrature and reduction oracles");
    s_gc->add_option("--tolerance", gc.tolerance, "Max relative error for gradient checks")->capture_default_str();
    s_gc->add_option("--points", gc.points, "Random points per check")->capture_default_str();
    s_gc->add_option("--oracle-seed", gc.oracle_seed, "Seed for oracle sample points")->capture_default_str();
    s_gc->add_flag("--inject-bug", gc.inject_bug, "Flip the sign of one gradient rule (negative control)");
    s_gc->add_option("--report", gc.report, "Also write <report>.json and <report>.txt");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    try {
        if (s_ingest->parsed()) return cmd_ingest(common, ingest);
        if (s_synth->parsed()) return cmd_synth(common, synth);
        if (s_pre->parsed()) return cmd_pretrain(common, pre);
        if (s_train->parsed()) return cmd_train(common, train);
        if (s_eval->parsed()) return cmd_eval(common, ev);
        if (s_gc->parsed()) return cmd_gradcheck(gc);
    } catch (const cg::ArgumentError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const cg::VersionError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIo;
    } catch (const cg::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIo;
    } catch (const cg::FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIo;
    } catch (const cg::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIo;
    } catch (const cg::ReferenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIo;
    } catch (const cg::ValueError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIo;
    } catch (const cg::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kVerifyFailed;
    }
    return kUsage;
}
