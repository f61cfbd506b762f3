#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "binary_io.hpp"
#include "circuit_graph.hpp"
#include "homo_graph.hpp"

namespace circuitgcl {

inline constexpr std::uint32_t kGraphFormatVersion = 1;

namespace graph_tags {
inline constexpr std::uint32_t kHeader = fourcc("HEAD");
inline constexpr std::uint32_t kTypes = fourcc("TYPE");
inline constexpr std::uint32_t kOffsets = fourcc("CSRO");
inline constexpr std::uint32_t kTargets = fourcc("CSRT");
inline constexpr std::uint32_t kOrigin = fourcc("ORIG");
inline constexpr std::uint32_t kNames = fourcc("NAME");
inline constexpr std::uint32_t kCandidates = fourcc("CAND");
inline constexpr std::uint32_t kGround = fourcc("GRND");
}  // namespace graph_tags

/// Coupling candidate in homogeneous ids.
struct CandidateRecord {
    std::uint32_t u;
    std::uint32_t v;
    CouplingKind kind;
    std::optional<double> farads;
    friend bool operator==(const CandidateRecord&, const CandidateRecord&) = default;
};

/// Everything the training commands need from one design: structure,
/// node names, coupling candidates and net ground capacitances.
struct GraphBundle {
    HomoGraph graph;
    std::vector<std::string> names;
    std::vector<CandidateRecord> candidates;
    std::vector<std::pair<std::uint32_t, std::optional<double>>> ground;
    friend bool operator==(const GraphBundle&, const GraphBundle&) = default;
};

inline GraphBundle make_bundle(const CircuitGraph& g) {
    GraphBundle b;
    b.graph = homogenize(g);
    for (const auto& n : g.nodes()) b.names.push_back(n.name);
    for (const auto& e : g.candidate_edges()) b.candidates.push_back({e.a, e.b, e.kind, e.label});
    for (const auto& [id, v] : g.ground_caps()) b.ground.emplace_back(id, v);
    return b;
}

namespace detail {

inline void write_graph_sections(Container& c, const HomoGraph& g) {
    using namespace graph_tags;
    ByteWriter head;
    head.u64(g.n);
    head.u64(g.targets.size());
    c.sections[kHeader] = head.take();
    c.sections[kTypes] = Bytes(g.x.begin(), g.x.end());
    ByteWriter off;
    for (auto o : g.offsets) off.u64(o);
    c.sections[kOffsets] = off.take();
    ByteWriter tg;
    for (auto t : g.targets) tg.u32(t);
    c.sections[kTargets] = tg.take();
    ByteWriter orig;
    for (auto o : g.origin) orig.u32(o);
    c.sections[kOrigin] = orig.take();
}

inline HomoGraph read_graph_sections(const Container& c) {
    using namespace graph_tags;
    ByteReader head(section(c, kHeader, "header"), section_offset(c, kHeader));
    const std::uint64_t n = head.u64();
    const std::uint64_t m = head.u64();
    head.expect_done("header section");

    auto sized = [&](std::uint32_t tag, const char* name, std::uint64_t count, std::size_t width) -> const Bytes& {
        const Bytes& s = section(c, tag, name);
        if (count > s.size() / std::max<std::size_t>(width, 1) || s.size() != count * width) {
            throw FormatError(section_offset(c, tag), std::string(name) + " section has " + std::to_string(s.size()) +
                                                          " bytes, expected " + std::to_string(count * width));
        }
        return s;
    };

    HomoGraph g;
    g.n = n;
    const Bytes& types = sized(kTypes, "type", n, 1);
    g.x.assign(types.begin(), types.end());
    ByteReader off(sized(kOffsets, "offset", n + 1, 8), section_offset(c, kOffsets));
    g.offsets.resize(n + 1);
    for (auto& o : g.offsets) o = off.u64();
    ByteReader tg(sized(kTargets, "adjacency", m, 4), section_offset(c, kTargets));
    g.targets.resize(m);
    for (auto& t : g.targets) t = tg.u32();
    ByteReader orig(sized(kOrigin, "origin", n, 4), section_offset(c, kOrigin));
    g.origin.resize(n);
    for (auto& o : g.origin) o = orig.u32();

    g.degrees.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (g.offsets[i + 1] < g.offsets[i] || g.offsets[i + 1] > m) {
            throw FormatError(section_offset(c, kOffsets) + 8 * (i + 1), "CSR offset out of order");
        }
        g.degrees[i] = static_cast<std::uint32_t>(g.offsets[i + 1] - g.offsets[i]);
    }
    try {
        g.validate();
    } catch (const ValueError& e) {
        throw FormatError(section_offset(c, kTargets), std::string("invalid adjacency: ") + e.what());
    }
    return g;
}

}  // namespace detail

/// "CGL1" container: header, types, CSR offsets/targets, origin map, CRC32 trailer.
inline Bytes serialize(const HomoGraph& g) {
    Container c{"CGL1", kGraphFormatVersion, {}};
    detail::write_graph_sections(c, g);
    return write_container(c);
}

/// Reads the structural part of any CGL1 file (extra sections are ignored).
inline HomoGraph deserialize(std::span<const std::uint8_t> bytes) {
    return detail::read_graph_sections(read_container(bytes, "CGL1", kGraphFormatVersion));
}

inline Bytes serialize_bundle(const GraphBundle& b) {
    using namespace graph_tags;
    Container c{"CGL1", kGraphFormatVersion, {}};
    detail::write_graph_sections(c, b.graph);
    ByteWriter names;
    names.u64(b.names.size());
    for (const auto& s : b.names) names.str(s);
    c.sections[kNames] = names.take();
    ByteWriter cand;
    cand.u64(b.candidates.size());
    for (const auto& e : b.candidates) {
        cand.u32(e.u);
        cand.u32(e.v);
        cand.u8(static_cast<std::uint8_t>(e.kind));
        cand.u8(e.farads ? 1 : 0);
        cand.f64(e.farads.value_or(0.0));
    }
    c.sections[kCandidates] = cand.take();
    ByteWriter gr;
    gr.u64(b.ground.size());
    for (const auto& [id, v] : b.ground) {
        gr.u32(id);
        gr.u8(v ? 1 : 0);
        gr.f64(v.value_or(0.0));
    }
    c.sections[kGround] = gr.take();
    return write_container(c);
}

inline GraphBundle deserialize_bundle(std::span<const std::uint8_t> bytes) {
    using namespace graph_tags;
    const Container c = read_container(bytes, "CGL1", kGraphFormatVersion);
    GraphBundle b;
    b.graph = detail::read_graph_sections(c);
    const auto n = b.graph.n;

    if (c.sections.count(kNames)) {
        ByteReader r(c.sections.at(kNames), section_offset(c, kNames));
        b.names.resize(r.count(4, "name table"));
        for (auto& s : b.names) s = r.str();
        r.expect_done("name section");
        if (b.names.size() != n) throw FormatError(section_offset(c, kNames), "name count disagrees with node count");
    }
    if (c.sections.count(kCandidates)) {
        ByteReader r(c.sections.at(kCandidates), section_offset(c, kCandidates));
        b.candidates.resize(r.count(18, "candidate table"));
        for (auto& e : b.candidates) {
            const auto at = r.offset();
            e.u = r.u32();
            e.v = r.u32();
            const auto k = r.u8();
            const bool has = r.u8() != 0;
            const double v = r.f64();
            if (e.u >= n || e.v >= n || e.u == e.v || k > 2) throw FormatError(at, "invalid candidate edge record");
            e.kind = static_cast<CouplingKind>(k);
            if (has) {
                if (!(v > 0.0)) throw FormatError(at, "non-positive coupling label");
                e.farads = v;
            }
        }
        r.expect_done("candidate section");
    }
    if (c.sections.count(kGround)) {
        ByteReader r(c.sections.at(kGround), section_offset(c, kGround));
        b.ground.resize(r.count(13, "ground table"));
        for (auto& [id, v] : b.ground) {
            const auto at = r.offset();
            id = r.u32();
            const bool has = r.u8() != 0;
            const double val = r.f64();
            if (id >= n || b.graph.x[id] != static_cast<std::uint8_t>(NodeKind::Net)) {
                throw FormatError(at, "ground capacitance attached to a non-net node");
            }
            v = has ? std::optional<double>(val) : std::nullopt;
        }
        r.expect_done("ground section");
    }
    return b;
}

/// Debugging mirror of the binary form.
inline nlohmann::ordered_json homo_to_json(const HomoGraph& g) {
    nlohmann::ordered_json doc;
    doc["version"] = kGraphFormatVersion;
    doc["n"] = g.n;
    doc["x"] = g.x;
    nlohmann::ordered_json adj = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < g.n; ++i) {
        auto nb = g.neighbors(i);
        adj.push_back(std::vector<std::uint32_t>(nb.begin(), nb.end()));
    }
    doc["adj"] = std::move(adj);
    doc["origin"] = g.origin;
    return doc;
}

}  // namespace circuitgcl
