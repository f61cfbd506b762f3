#pragma once

#include <string>
#include <string_view>

#include "circuit_graph.hpp"
#include "netlist_parser.hpp"
#include "text_util.hpp"

namespace circuitgcl {

namespace detail {

inline bool is_ground_name(std::string_view lowered) { return lowered == "0" || lowered == "gnd"; }

inline double parse_cap_value(std::size_t line, const std::string& tok) {
    auto v = text::parse_spice_number(tok);
    if (!v) throw ParseError(line, tok, "invalid capacitance value");
    if (!(*v > 0.0)) {
        throw ValueError("line " + std::to_string(line) + ": capacitance must be positive, got '" + tok + "'");
    }
    return *v;
}

/// Pins take precedence over nets because pin names contain ':' and cannot
/// collide with a plain net name.
inline NodeId resolve_spf_name(const CircuitGraph& g, std::size_t line, const std::string& name) {
    if (auto pin = g.find(NodeKind::Pin, name)) return *pin;
    if (auto net = g.find(NodeKind::Net, canonical_global(name))) return *net;
    throw ReferenceError(name, "SPF references unknown net or pin", line);
}

}  // namespace detail

/// Attaches parasitic labels from the SPF subset to a copy of `g`.
///
///   *|NET <net> <total>        ground capacitance of a net
///   C<id> <a> <b> <value>      coupling between nets/pins; to "0"/"gnd" it
///                              adds to the ground capacitance of a's net
///
/// R cards, other "*|" directives, comments and dot-cards are skipped.
/// Repeated couplings between one pair are summed.
inline CircuitGraph parse_spf_labels(std::string_view text, const CircuitGraph& g) {
    CircuitGraph out = g;
    struct Pending {
        std::size_t line;
        std::vector<std::string> tokens;
    };
    std::vector<Pending> cards;
    const auto raw = text::lines(text);
    for (std::size_t i = 0; i < raw.size(); ++i) {
        std::string_view line = text::trim(raw[i]);
        if (line.empty()) continue;
        if (line.rfind("*|", 0) == 0) {
            auto toks = text::split_ws(line);
            for (auto& t : toks) t = text::lower(t);
            cards.push_back({i + 1, std::move(toks)});
            continue;
        }
        if (line.front() == '*' || line.front() == '.') continue;
        if (line.front() == '+') {
            if (cards.empty()) throw ParseError(i + 1, "+", "continuation with no preceding card");
            for (auto& t : text::split_ws(line.substr(1))) cards.back().tokens.push_back(text::lower(t));
            continue;
        }
        auto toks = text::split_ws(line);
        for (auto& t : toks) t = text::lower(t);
        cards.push_back({i + 1, std::move(toks)});
    }

    for (const auto& card : cards) {
        const auto& t = card.tokens;
        if (t[0] == "*|net") {
            if (t.size() < 3) throw ParseError(card.line, t[0], "*|NET needs a net name and a total capacitance");
            const auto net = out.find(NodeKind::Net, canonical_global(t[1]));
            if (!net) throw ReferenceError(t[1], "SPF references unknown net", card.line);
            out.set_ground_cap(*net, detail::parse_cap_value(card.line, t[2]));
        } else if (t[0].rfind("*|", 0) == 0) {
            continue;
        } else if (t[0][0] == 'c') {
            if (t.size() < 4) throw ParseError(card.line, t[0], "capacitor needs two nodes and a value");
            const double value = detail::parse_cap_value(card.line, t[3]);
            const bool ga = detail::is_ground_name(t[1]);
            const bool gb = detail::is_ground_name(t[2]);
            if (ga && gb) throw ValueError("line " + std::to_string(card.line) + ": capacitor from ground to ground");
            if (ga || gb) {
                const NodeId n = detail::resolve_spf_name(out, card.line, ga ? t[2] : t[1]);
                out.add_ground_cap(out.net_of(n), value);
                continue;
            }
            const NodeId a = detail::resolve_spf_name(out, card.line, t[1]);
            const NodeId b = detail::resolve_spf_name(out, card.line, t[2]);
            if (a == b) throw ValueError("line " + std::to_string(card.line) + ": capacitor '" + t[0] + "' couples '" + t[1] + "' to itself");
            out.add_candidate(a, b, value);
        } else if (t[0][0] == 'r') {
            continue;
        } else {
            throw ParseError(card.line, t[0], "unsupported SPF card");
        }
    }
    return out;
}

}  // namespace circuitgcl
