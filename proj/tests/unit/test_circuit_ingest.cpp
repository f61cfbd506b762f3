#include <gtest/gtest.h>

#include <circuitgcl/circuit_io.hpp>
#include <circuitgcl/netlist_parser.hpp>
#include <circuitgcl/spf_parser.hpp>
#include <circuitgcl/synth.hpp>

#include "../support/corpus_check.hpp"

using namespace circuitgcl;

namespace {

void expect_pin_invariant(const CircuitGraph& g) {
    std::vector<int> dp(g.node_count(), 0), np(g.node_count(), 0);
    for (const auto& e : g.struct_edges()) {
        ASSERT_EQ(g.node(e.pin).kind, NodeKind::Pin);
        if (e.kind == StructEdgeKind::DevicePin) {
            ASSERT_EQ(g.node(e.owner).kind, NodeKind::Device);
            ++dp[e.pin];
        } else {
            ASSERT_EQ(g.node(e.owner).kind, NodeKind::Net);
            ++np[e.pin];
        }
    }
    for (const auto& n : g.nodes()) {
        if (n.kind == NodeKind::Pin) {
            ASSERT_EQ(dp[n.id], 1) << n.name;
            ASSERT_EQ(np[n.id], 1) << n.name;
        }
    }
}

std::array<double, 5> bin_shares(const CircuitGraph& g, const LabelSpec& spec) {
    std::array<double, 5> h{};
    double n = 0;
    for (const auto& e : g.candidate_edges()) {
        if (!e.label) continue;
        h[bin_index(normalize_label(*e.label, spec), 5)] += 1;
        n += 1;
    }
    for (auto& v : h) v /= n;
    return h;
}

}  // namespace

TEST(ParseNetlist, SingleMosfet) {
    const auto g = parse_netlist("M1 n1 n2 0 0 nch");
    EXPECT_EQ(g.count(NodeKind::Device), 1u);
    EXPECT_EQ(g.count(NodeKind::Pin), 4u);
    EXPECT_EQ(g.count(NodeKind::Net), 3u);
    EXPECT_EQ(g.count(StructEdgeKind::DevicePin), 4u);
    EXPECT_EQ(g.count(StructEdgeKind::NetPin), 4u);
    EXPECT_TRUE(g.find(NodeKind::Net, "0"));
    EXPECT_TRUE(g.find(NodeKind::Pin, "m1:b"));
    expect_pin_invariant(g);
}

TEST(ParseNetlist, EmptyText) {
    const auto g = parse_netlist("");
    EXPECT_EQ(g.node_count(), 0u);
    EXPECT_TRUE(g.struct_edges().empty());
}

TEST(ParseNetlist, TooFewTerminals) {
    try {
        parse_netlist("M1 n1 n2");
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 1u);
        EXPECT_EQ(e.token(), "m1");
    }
}

TEST(ParseNetlist, GroundAliasAndCase) {
    const auto g = parse_netlist("M1 A B GND 0 nch\nM2 a b VDD vdd pch\n");
    EXPECT_EQ(g.count(NodeKind::Net), 4u);  // a, b, 0, vdd
    EXPECT_FALSE(g.find(NodeKind::Net, "gnd"));
}

TEST(ParseNetlist, GlobalsAreNotPrefixed) {
    const auto g = parse_netlist(
        ".global vb\n.subckt s a\nm1 a vb vdd 0 nch\n.ends\nx1 n s\nx2 n s\n");
    EXPECT_TRUE(g.find(NodeKind::Net, "vb"));
    EXPECT_FALSE(g.find(NodeKind::Net, "x1/vb"));
    EXPECT_EQ(g.count(NodeKind::Net), 4u);  // n, vb, vdd, 0
}

TEST(ParseNetlist, ParamWarning) {
    std::vector<Diagnostic> w;
    parse_netlist(".param x=1\nm1 a b 0 0 nch\n", &w);
    ASSERT_EQ(w.size(), 1u);
    EXPECT_EQ(w[0].line, 1u);
}

TEST(ParseSpf, NetNetCoupling) {
    const auto g = parse_spf_labels("C1 n1 n2 2e-18\n", parse_netlist("M1 n1 n2 0 0 nch"));
    ASSERT_EQ(g.candidate_edges().size(), 1u);
    const auto& e = g.candidate_edges()[0];
    EXPECT_EQ(e.kind, CouplingKind::NetNet);
    EXPECT_EQ(g.node(e.a).name, "n1");
    EXPECT_EQ(g.node(e.b).name, "n2");
    EXPECT_DOUBLE_EQ(*e.label, 2e-18);
}

TEST(ParseSpf, EmptyLeavesGraphUnchanged) {
    const auto g = parse_netlist("M1 n1 n2 0 0 nch");
    const auto h = parse_spf_labels("", g);
    EXPECT_TRUE(h == g);
    EXPECT_EQ(h.labeled_candidate_count(), 0u);
}

TEST(ParseSpf, UnknownNetNamed) {
    try {
        parse_spf_labels("C1 n1 nX 1e-18\n", parse_netlist("M1 n1 n2 0 0 nch"));
        FAIL() << "expected ReferenceError";
    } catch (const ReferenceError& e) {
        EXPECT_EQ(e.identifier(), "nx");
        EXPECT_NE(std::string(e.what()).find("nx"), std::string::npos);
    }
}

TEST(ParseSpf, NegativeValue) {
    EXPECT_THROW(parse_spf_labels("C1 n1 n2 -2e-18\n", parse_netlist("M1 n1 n2 0 0 nch")), ValueError);
}

TEST(ParseSpf, SuffixedValues) {
    EXPECT_DOUBLE_EQ(*text::parse_spice_number("1.5fF"), 1.5e-15);
    EXPECT_DOUBLE_EQ(*text::parse_spice_number("3meg"), 3e6);
    EXPECT_DOUBLE_EQ(*text::parse_spice_number("20a"), 2e-17);
    EXPECT_DOUBLE_EQ(*text::parse_spice_number("2e-18"), 2e-18);
    EXPECT_FALSE(text::parse_spice_number("abc"));
    EXPECT_FALSE(text::parse_spice_number("1f2"));
}

TEST(Corpus, GoldenAndMalformedFixtures) {
    for (const auto& r : corpus::run_all(CIRCUITGCL_FIXTURES)) EXPECT_TRUE(r.ok) << r.name << ": " << r.detail;
}

TEST(Labels, NormalizeEndpointsAndMidpoint) {
    const LabelSpec spec;
    const double in[] = {1e-21, 1e-15, 1e-18};
    const auto out = normalize_labels(in, spec);
    EXPECT_NEAR(out[0], 0.0, 1e-12);
    EXPECT_NEAR(out[1], 1.0, 1e-12);
    EXPECT_NEAR(out[2], 0.5, 1e-12);
    EXPECT_NEAR(denormalize_label(0.5, spec), 1e-18, 1e-30);
}

TEST(Labels, NormalizeRejectsOutOfRange) {
    const double in[] = {1e-14};
    EXPECT_THROW(normalize_labels(in, LabelSpec{}), ContractError);
}

TEST(Labels, EqualWidthBins) {
    const double in[] = {0.45, 0.0, 1.0, 0.2, 0.3999999};
    const auto b = bin_ground_caps(in, 5);
    EXPECT_EQ(b, (std::vector<std::size_t>{2, 0, 4, 1, 1}));
    const double bad[] = {1.2};
    EXPECT_THROW(bin_ground_caps(bad, 5), ContractError);
}

TEST(Labels, SpecValidation) {
    EXPECT_THROW((LabelSpec{LabelMode::Regression, 1e-15, 1e-21, 5}.validate()), ArgumentError);
    EXPECT_THROW((LabelSpec{LabelMode::Classification, 1e-21, 1e-15, 1}.validate()), ArgumentError);
}

TEST(Labels, FilterKeepsOnlyInRange) {
    auto g = parse_netlist("M1 n1 n2 n3 0 nch");
    const auto n1 = *g.find(NodeKind::Net, "n1"), n2 = *g.find(NodeKind::Net, "n2"),
               n3 = *g.find(NodeKind::Net, "n3");
    g.add_candidate(n1, n2, 1e-12);
    g.add_candidate(n1, n3, 1e-18);
    g.add_candidate(n2, n3, 1e-24);
    const LabelSpec spec;
    EXPECT_EQ(filter_labels(g, spec), 2u);
    for (const auto& e : g.candidate_edges()) {
        if (e.label) {
            EXPECT_TRUE(spec.contains(*e.label));
        }
    }
    EXPECT_EQ(g.labeled_candidate_count(), 1u);
}

TEST(Synth, DeterministicBytes) {
    SynthConfig cfg;
    cfg.seed = 42;
    cfg.n_cells = 60;
    EXPECT_EQ(circuit_to_bytes(synth_generate(cfg)), circuit_to_bytes(synth_generate(cfg)));
    auto other = cfg;
    other.seed = 43;
    EXPECT_NE(circuit_to_bytes(synth_generate(cfg)), circuit_to_bytes(synth_generate(other)));
}

TEST(Synth, InverterOnlyNodeFormula) {
    SynthConfig cfg;
    cfg.n_cells = 10;
    cfg.cell_mix = {1.0, 0.0, 0.0, 0.0};
    cfg.seed = 7;
    const auto g = synth_generate(cfg);
    EXPECT_EQ(g.count(NodeKind::Device), 20u);
    EXPECT_EQ(g.count(NodeKind::Pin), 80u);
    EXPECT_EQ(g.count(NodeKind::Net), 13u);
    EXPECT_EQ(g.node_count(), inverter_chain_node_count(10));
    EXPECT_EQ(g.node_count(), 113u);
}

TEST(Synth, InvalidConfig) {
    SynthConfig cfg;
    cfg.n_cells = 0;
    EXPECT_THROW(synth_generate(cfg), ArgumentError);
    cfg.n_cells = 5;
    cfg.coupling_density = 2.0;
    EXPECT_THROW(synth_generate(cfg), ArgumentError);
    cfg.coupling_density = 0.0;
    EXPECT_THROW(synth_generate(cfg), ArgumentError);
}

TEST(Synth, PinInvariantAndLabelRange) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        SynthConfig cfg;
        cfg.seed = seed;
        cfg.n_cells = 40;
        const auto g = synth_generate(cfg);
        expect_pin_invariant(g);
        g.validate();
        EXPECT_EQ(g.labeled_candidate_count(), g.candidate_edges().size());
        for (const auto& e : g.candidate_edges()) {
            EXPECT_TRUE(cfg.labels.contains(*e.label));
        }
    }
}

TEST(Synth, DefaultConfigIsSkewed) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        SynthConfig cfg;
        cfg.seed = seed;
        const auto h = bin_shares(synth_generate(cfg), cfg.labels);
        EXPECT_GT(*std::max_element(h.begin(), h.end()), 0.40) << "seed " << seed;
        EXPECT_LT(*std::min_element(h.begin(), h.end()), 0.05) << "seed " << seed;
    }
}

TEST(CircuitIo, JsonRoundTripAndFieldOrder) {
    SynthConfig cfg;
    cfg.n_cells = 12;
    cfg.seed = 3;
    const auto g = synth_generate(cfg);
    const auto doc = circuit_to_json(g);
    std::vector<std::string> keys;
    for (const auto& [k, v] : doc.items()) keys.push_back(k);
    EXPECT_EQ(keys, (std::vector<std::string>{"version", "nodes", "struct_edges", "candidate_edges", "ground_caps"}));
    const auto back = circuit_from_json(nlohmann::json::parse(doc.dump()));
    EXPECT_TRUE(back == g);
}

TEST(CircuitIo, BinaryRoundTripAndCorruption) {
    SynthConfig cfg;
    cfg.n_cells = 12;
    cfg.seed = 4;
    const auto g = synth_generate(cfg);
    auto bytes = circuit_to_bytes(g);
    EXPECT_TRUE(circuit_from_bytes(bytes) == g);

    const Bytes truncated(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(bytes.size() / 2));
    EXPECT_THROW(circuit_from_bytes(truncated), FormatError);
    bytes[bytes.size() / 2] ^= 0x5a;
    EXPECT_THROW(circuit_from_bytes(bytes), FormatError);
}
