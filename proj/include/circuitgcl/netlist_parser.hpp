#pragma once

#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "circuit_graph.hpp"
#include "text_util.hpp"

namespace circuitgcl {

struct Diagnostic {
    std::size_t line;
    std::string message;
};

/// Names that always refer to one shared net, regardless of hierarchy.
/// "gnd" is folded into "0".
inline std::string canonical_global(std::string_view lowered) {
    if (lowered == "gnd") return "0";
    return std::string(lowered);
}

inline bool is_builtin_global(std::string_view lowered) {
    return lowered == "0" || lowered == "gnd" || lowered == "vdd";
}

namespace detail {

struct Card {
    std::size_t line;
    std::vector<std::string> tokens;  // lowercased
};

struct Subckt {
    std::string name;
    std::size_t line;
    std::vector<std::string> ports;
    std::vector<Card> body;
};

inline bool is_param(const std::string& tok) { return tok.find('=') != std::string::npos; }

/// Joins continuation lines, strips comments and lowercases tokens.
inline std::vector<Card> tokenize_netlist(std::string_view text) {
    std::vector<Card> cards;
    const auto raw = text::lines(text);
    for (std::size_t i = 0; i < raw.size(); ++i) {
        std::string_view line = raw[i];
        for (char c : line) {
            if (static_cast<unsigned char>(c) > 127) throw ParseError(i + 1, std::string(1, c), "non-ASCII character");
        }
        if (auto cut = line.find_first_of("$;"); cut != std::string_view::npos) line = line.substr(0, cut);
        line = text::trim(line);
        if (line.empty() || line.front() == '*') continue;
        if (line.front() == '+') {
            if (cards.empty()) throw ParseError(i + 1, "+", "continuation with no preceding card");
            for (auto& t : text::split_ws(line.substr(1))) cards.back().tokens.push_back(text::lower(t));
            continue;
        }
        Card card{i + 1, {}};
        for (auto& t : text::split_ws(line)) card.tokens.push_back(text::lower(t));
        cards.push_back(std::move(card));
    }
    return cards;
}

class Elaborator {
public:
    Elaborator(CircuitGraph& g, std::vector<Diagnostic>* warnings) : g_(g), warnings_(warnings) {}

    void run(std::string_view text) {
        std::vector<Card> top;
        split_definitions(tokenize_netlist(text), top);
        std::unordered_map<std::string, std::string> no_ports;
        elaborate(top, "", no_ports);
    }

private:
    void warn(std::size_t line, std::string msg) {
        if (warnings_) warnings_->push_back({line, std::move(msg)});
    }

    void split_definitions(std::vector<Card> cards, std::vector<Card>& top) {
        Subckt* open = nullptr;
        for (auto& card : cards) {
            const std::string& head = card.tokens.front();
            if (head == ".subckt") {
                if (open) throw ParseError(card.line, head, "nested .subckt definitions are not supported");
                if (card.tokens.size() < 2) throw ParseError(card.line, head, ".subckt needs a name");
                Subckt s{card.tokens[1], card.line, {}, {}};
                for (std::size_t k = 2; k < card.tokens.size(); ++k) {
                    if (!is_param(card.tokens[k])) s.ports.push_back(card.tokens[k]);
                }
                if (subckts_.count(s.name)) throw ParseError(card.line, s.name, "subcircuit defined twice");
                open = &subckts_.emplace(s.name, std::move(s)).first->second;
            } else if (head == ".ends") {
                if (!open) throw ParseError(card.line, head, ".ends without .subckt");
                if (card.tokens.size() > 1 && card.tokens[1] != open->name) {
                    throw ParseError(card.line, card.tokens[1], ".ends name does not match .subckt " + open->name);
                }
                open = nullptr;
            } else if (head == ".end") {
                break;
            } else if (head == ".global") {
                for (std::size_t k = 1; k < card.tokens.size(); ++k) globals_.insert(card.tokens[k]);
            } else if (open) {
                open->body.push_back(std::move(card));
            } else {
                top.push_back(std::move(card));
            }
        }
        if (open) throw ParseError(open->line, open->name, "missing .ends");
    }

    bool is_global(const std::string& name) const { return is_builtin_global(name) || globals_.count(name); }

    std::string resolve_net(const std::string& name, const std::string& prefix,
                            const std::unordered_map<std::string, std::string>& ports) const {
        if (is_global(name)) return canonical_global(name);
        if (auto it = ports.find(name); it != ports.end()) return it->second;
        return prefix + name;
    }

    void add_device(const Card& card, const std::string& prefix,
                    const std::unordered_map<std::string, std::string>& ports,
                    std::initializer_list<const char*> roles) {
        const std::string name = prefix + card.tokens[0];
        if (g_.find(NodeKind::Device, name)) throw ParseError(card.line, card.tokens[0], "duplicate instance name");
        const NodeId dev = g_.add_device(name);
        std::size_t k = 1;
        for (const char* role : roles) {
            const NodeId net = g_.net(resolve_net(card.tokens[k++], prefix, ports));
            g_.add_pin(dev, role, net);
        }
    }

    void elaborate(const std::vector<Card>& cards, const std::string& prefix,
                   const std::unordered_map<std::string, std::string>& ports) {
        for (const auto& card : cards) {
            const auto& toks = card.tokens;
            const std::string& head = toks.front();
            if (head[0] == '.') {
                warn(card.line, "ignored control card " + head);
                continue;
            }
            switch (head[0]) {
                case 'm': {
                    if (toks.size() < 6) {
                        throw ParseError(card.line, head,
                                         "MOSFET needs drain, gate, source, bulk and model (got " +
                                             std::to_string(toks.size() - 1) + " fields)");
                    }
                    for (std::size_t k = 1; k <= 5; ++k) {
                        if (is_param(toks[k])) throw ParseError(card.line, toks[k], "expected a net or model name");
                    }
                    add_device(card, prefix, ports, {"d", "g", "s", "b"});
                    break;
                }
                case 'r':
                case 'c': {
                    if (toks.size() < 3 || is_param(toks[1]) || is_param(toks[2])) {
                        throw ParseError(card.line, head, "two-terminal element needs two nets");
                    }
                    if (toks.size() >= 4 && !is_param(toks[3]) && !text::parse_spice_number(toks[3])) {
                        throw ParseError(card.line, toks[3], "invalid element value");
                    }
                    add_device(card, prefix, ports, {"1", "2"});
                    break;
                }
                case 'v':
                case 'i': {
                    if (toks.size() < 3) throw ParseError(card.line, head, "source needs two nets");
                    g_.net(resolve_net(toks[1], prefix, ports));
                    g_.net(resolve_net(toks[2], prefix, ports));
                    break;
                }
                case 'x': instantiate(card, prefix, ports); break;
                default: throw ParseError(card.line, head, "unsupported element type");
            }
        }
    }

    void instantiate(const Card& card, const std::string& prefix,
                     const std::unordered_map<std::string, std::string>& ports) {
        std::vector<std::string> positional;
        for (std::size_t k = 1; k < card.tokens.size(); ++k) {
            if (!is_param(card.tokens[k])) positional.push_back(card.tokens[k]);
        }
        if (positional.empty()) throw ParseError(card.line, card.tokens[0], "instance needs a subcircuit name");
        const std::string sub_name = positional.back();
        positional.pop_back();
        auto it = subckts_.find(sub_name);
        if (it == subckts_.end()) {
            throw ReferenceError(sub_name, "unknown subcircuit", card.line);
        }
        const Subckt& sub = it->second;
        if (positional.size() != sub.ports.size()) {
            throw ParseError(card.line, card.tokens[0],
                             "subcircuit " + sub.name + " has " + std::to_string(sub.ports.size()) +
                                 " ports, instance connects " + std::to_string(positional.size()));
        }
        if (active_.count(sub.name)) {
            throw ReferenceError(sub.name, "recursive instantiation of subcircuit", card.line);
        }
        std::unordered_map<std::string, std::string> inner;
        for (std::size_t k = 0; k < positional.size(); ++k) {
            inner[sub.ports[k]] = resolve_net(positional[k], prefix, ports);
        }
        active_.insert(sub.name);
        elaborate(sub.body, prefix + card.tokens[0] + "/", inner);
        active_.erase(sub.name);
    }

    CircuitGraph& g_;
    std::vector<Diagnostic>* warnings_;
    std::unordered_map<std::string, Subckt> subckts_;
    std::unordered_set<std::string> globals_;
    std::set<std::string> active_;
};

}  // namespace detail

/// Parses the SPICE subset into a flat heterogeneous graph. Names are
/// case-insensitive and stored lowercased; subcircuits are flattened with
/// "/"-joined hierarchical names. Ignored control cards are reported through
/// `warnings` when given.
inline CircuitGraph parse_netlist(std::string_view text, std::vector<Diagnostic>* warnings = nullptr) {
    CircuitGraph g;
    detail::Elaborator(g, warnings).run(text);
    return g;
}

}  // namespace circuitgcl
