#pragma once

#include <string>

#include <json.hpp>

#include "binary_io.hpp"
#include "circuit_graph.hpp"

namespace circuitgcl {

inline constexpr int kCircuitJsonVersion = 1;
inline constexpr std::uint32_t kCircuitBinaryVersion = 1;

/// Versioned JSON document {version, nodes, struct_edges, candidate_edges, ground_caps}.
inline nlohmann::ordered_json circuit_to_json(const CircuitGraph& g) {
    using nlohmann::ordered_json;
    ordered_json doc;
    doc["version"] = kCircuitJsonVersion;
    ordered_json nodes = ordered_json::array();
    for (const auto& n : g.nodes()) {
        nodes.push_back({{"id", n.id}, {"kind", to_string(n.kind)}, {"name", n.name}});
    }
    doc["nodes"] = std::move(nodes);
    ordered_json se = ordered_json::array();
    for (const auto& e : g.struct_edges()) se.push_back({{"a", e.owner}, {"b", e.pin}, {"kind", to_string(e.kind)}});
    doc["struct_edges"] = std::move(se);
    ordered_json ce = ordered_json::array();
    for (const auto& e : g.candidate_edges()) {
        ordered_json item{{"a", e.a}, {"b", e.b}, {"kind", to_string(e.kind)}};
        item["label"] = e.label ? ordered_json(*e.label) : ordered_json(nullptr);
        ce.push_back(std::move(item));
    }
    doc["candidate_edges"] = std::move(ce);
    ordered_json gc = ordered_json::object();
    for (const auto& [id, v] : g.ground_caps()) gc[std::to_string(id)] = v ? ordered_json(*v) : ordered_json(nullptr);
    doc["ground_caps"] = std::move(gc);
    return doc;
}

namespace detail {

template <class E>
E kind_from_string(const std::string& s, std::initializer_list<E> all) {
    for (E e : all) {
        if (to_string(e) == s) return e;
    }
    throw ValueError("unknown kind '" + s + "'");
}

}  // namespace detail

inline CircuitGraph circuit_from_json(const nlohmann::json& doc) {
    try {
        if (doc.at("version").get<int>() != kCircuitJsonVersion) {
            throw VersionError("circuit JSON version " + doc.at("version").dump() + " is not supported (expected " +
                               std::to_string(kCircuitJsonVersion) + ")");
        }
        std::vector<CircuitNode> nodes;
        for (const auto& n : doc.at("nodes")) {
            nodes.push_back({n.at("id").get<NodeId>(),
                             detail::kind_from_string(n.at("kind").get<std::string>(),
                                                      {NodeKind::Net, NodeKind::Device, NodeKind::Pin}),
                             n.at("name").get<std::string>()});
        }
        std::vector<StructEdge> se;
        for (const auto& e : doc.at("struct_edges")) {
            se.push_back({e.at("a").get<NodeId>(), e.at("b").get<NodeId>(),
                          detail::kind_from_string(e.at("kind").get<std::string>(),
                                                   {StructEdgeKind::DevicePin, StructEdgeKind::NetPin})});
        }
        std::vector<CandidateEdge> ce;
        for (const auto& e : doc.at("candidate_edges")) {
            std::optional<double> label;
            if (!e.at("label").is_null()) label = e.at("label").get<double>();
            ce.push_back({e.at("a").get<NodeId>(), e.at("b").get<NodeId>(),
                          detail::kind_from_string(e.at("kind").get<std::string>(),
                                                   {CouplingKind::PinNet, CouplingKind::PinPin, CouplingKind::NetNet}),
                          label});
        }
        std::map<NodeId, std::optional<double>> gc;
        for (const auto& [k, v] : doc.at("ground_caps").items()) {
            gc[static_cast<NodeId>(std::stoul(k))] = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
        }
        return CircuitGraph::from_parts(std::move(nodes), std::move(se), std::move(ce), std::move(gc));
    } catch (const nlohmann::json::exception& e) {
        throw ValueError(std::string("malformed circuit JSON: ") + e.what());
    }
}

namespace circuit_tags {
inline constexpr std::uint32_t kNodes = fourcc("NODE");
inline constexpr std::uint32_t kStruct = fourcc("STRU");
inline constexpr std::uint32_t kCandidates = fourcc("CAND");
inline constexpr std::uint32_t kGround = fourcc("GRND");
}  // namespace circuit_tags

/// Compact binary form, magic "CGC1".
inline Bytes circuit_to_bytes(const CircuitGraph& g) {
    Container c{"CGC1", kCircuitBinaryVersion, {}};
    ByteWriter nodes;
    nodes.u64(g.node_count());
    for (const auto& n : g.nodes()) {
        nodes.u8(static_cast<std::uint8_t>(n.kind));
        nodes.str(n.name);
    }
    ByteWriter st;
    st.u64(g.struct_edges().size());
    for (const auto& e : g.struct_edges()) {
        st.u32(e.owner);
        st.u32(e.pin);
        st.u8(static_cast<std::uint8_t>(e.kind));
    }
    ByteWriter cand;
    cand.u64(g.candidate_edges().size());
    for (const auto& e : g.candidate_edges()) {
        cand.u32(e.a);
        cand.u32(e.b);
        cand.u8(static_cast<std::uint8_t>(e.kind));
        cand.u8(e.label ? 1 : 0);
        cand.f64(e.label.value_or(0.0));
    }
    ByteWriter gr;
    gr.u64(g.ground_caps().size());
    for (const auto& [id, v] : g.ground_caps()) {
        gr.u32(id);
        gr.u8(v ? 1 : 0);
        gr.f64(v.value_or(0.0));
    }
    c.sections[circuit_tags::kNodes] = nodes.take();
    c.sections[circuit_tags::kStruct] = st.take();
    c.sections[circuit_tags::kCandidates] = cand.take();
    c.sections[circuit_tags::kGround] = gr.take();
    return write_container(c);
}

inline CircuitGraph circuit_from_bytes(std::span<const std::uint8_t> bytes) {
    using namespace circuit_tags;
    const Container c = read_container(bytes, "CGC1", kCircuitBinaryVersion);

    ByteReader nr(section(c, kNodes, "node"), section_offset(c, kNodes));
    std::vector<CircuitNode> nodes(nr.count(5, "node table"));
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const auto at = nr.offset();
        const std::uint8_t kind = nr.u8();
        if (kind > 2) throw FormatError(at, "unknown node kind " + std::to_string(kind));
        nodes[i] = {static_cast<NodeId>(i), static_cast<NodeKind>(kind), nr.str()};
    }
    nr.expect_done("node section");

    ByteReader sr(section(c, kStruct, "structural edge"), section_offset(c, kStruct));
    std::vector<StructEdge> se(sr.count(9, "structural edge table"));
    for (auto& e : se) {
        e.owner = sr.u32();
        e.pin = sr.u32();
        const auto at = sr.offset();
        const std::uint8_t k = sr.u8();
        if (k > 1) throw FormatError(at, "unknown structural edge kind");
        e.kind = static_cast<StructEdgeKind>(k);
    }
    sr.expect_done("structural edge section");

    ByteReader cr(section(c, kCandidates, "candidate edge"), section_offset(c, kCandidates));
    std::vector<CandidateEdge> ce(cr.count(18, "candidate edge table"));
    for (auto& e : ce) {
        e.a = cr.u32();
        e.b = cr.u32();
        const auto at = cr.offset();
        const std::uint8_t k = cr.u8();
        if (k > 2) throw FormatError(at, "unknown coupling kind");
        e.kind = static_cast<CouplingKind>(k);
        const bool has = cr.u8() != 0;
        const double v = cr.f64();
        if (has) e.label = v;
    }
    cr.expect_done("candidate edge section");

    ByteReader gr(section(c, kGround, "ground capacitance"), section_offset(c, kGround));
    std::map<NodeId, std::optional<double>> gc;
    const auto n_ground = gr.count(13, "ground table");
    for (std::uint64_t i = 0; i < n_ground; ++i) {
        const NodeId id = gr.u32();
        const bool has = gr.u8() != 0;
        const double v = gr.f64();
        gc[id] = has ? std::optional<double>(v) : std::nullopt;
    }
    gr.expect_done("ground section");

    try {
        return CircuitGraph::from_parts(std::move(nodes), std::move(se), std::move(ce), std::move(gc));
    } catch (const ValueError& e) {
        throw FormatError(0, std::string("inconsistent circuit payload: ") + e.what());
    } catch (const ArgumentError& e) {
        throw FormatError(0, std::string("inconsistent circuit payload: ") + e.what());
    }
}

}  // namespace circuitgcl
