#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "errors.hpp"

namespace circuitgcl {

using NodeId = std::uint32_t;

/// The numeric value doubles as the homogeneous type code (Net 0, Device 1, Pin 2).
enum class NodeKind : std::uint8_t { Net = 0, Device = 1, Pin = 2 };
enum class StructEdgeKind : std::uint8_t { DevicePin = 0, NetPin = 1 };
enum class CouplingKind : std::uint8_t { PinNet = 0, PinPin = 1, NetNet = 2 };

inline constexpr std::string_view to_string(NodeKind k) {
    switch (k) {
        case NodeKind::Net: return "net";
        case NodeKind::Device: return "device";
        case NodeKind::Pin: return "pin";
    }
    return "?";
}
inline constexpr std::string_view to_string(StructEdgeKind k) {
    return k == StructEdgeKind::DevicePin ? "device_pin" : "net_pin";
}
inline constexpr std::string_view to_string(CouplingKind k) {
    switch (k) {
        case CouplingKind::PinNet: return "pin_net";
        case CouplingKind::PinPin: return "pin_pin";
        case CouplingKind::NetNet: return "net_net";
    }
    return "?";
}

struct CircuitNode {
    NodeId id;
    NodeKind kind;
    std::string name;
};

/// `owner` is the Device (DevicePin) or Net (NetPin) endpoint.
struct StructEdge {
    NodeId owner;
    NodeId pin;
    StructEdgeKind kind;
};

/// Potential coupling capacitor. `label` is in farads when known.
struct CandidateEdge {
    NodeId a;
    NodeId b;
    CouplingKind kind;
    std::optional<double> label;
};

/// Heterogeneous netlist graph. Structural edges connect Device-Pin and
/// Net-Pin only; coupling candidates are kept apart from the structure.
class CircuitGraph {
public:
    const std::vector<CircuitNode>& nodes() const noexcept { return nodes_; }
    const std::vector<StructEdge>& struct_edges() const noexcept { return struct_edges_; }
    const std::vector<CandidateEdge>& candidate_edges() const noexcept { return candidate_edges_; }
    const std::map<NodeId, std::optional<double>>& ground_caps() const noexcept { return ground_caps_; }

    std::size_t node_count() const noexcept { return nodes_.size(); }
    const CircuitNode& node(NodeId id) const { return nodes_.at(id); }

    std::size_t count(NodeKind k) const {
        return static_cast<std::size_t>(
            std::count_if(nodes_.begin(), nodes_.end(), [k](const CircuitNode& n) { return n.kind == k; }));
    }
    std::size_t count(StructEdgeKind k) const {
        return static_cast<std::size_t>(
            std::count_if(struct_edges_.begin(), struct_edges_.end(), [k](const StructEdge& e) { return e.kind == k; }));
    }
    std::size_t count(CouplingKind k) const {
        return static_cast<std::size_t>(std::count_if(candidate_edges_.begin(), candidate_edges_.end(),
                                                      [k](const CandidateEdge& e) { return e.kind == k; }));
    }
    std::size_t labeled_candidate_count() const {
        return static_cast<std::size_t>(std::count_if(candidate_edges_.begin(), candidate_edges_.end(),
                                                      [](const CandidateEdge& e) { return e.label.has_value(); }));
    }

    std::optional<NodeId> find(NodeKind kind, std::string_view name) const {
        const auto& index = index_[static_cast<std::size_t>(kind)];
        if (auto it = index.find(std::string(name)); it != index.end()) return it->second;
        return std::nullopt;
    }

    /// Returns the existing net with this name or creates it.
    NodeId net(std::string_view name) {
        if (auto id = find(NodeKind::Net, name)) return *id;
        return add_node(NodeKind::Net, std::string(name));
    }

    NodeId add_device(std::string_view name) {
        if (find(NodeKind::Device, name)) throw ValueError("duplicate device name '" + std::string(name) + "'");
        return add_node(NodeKind::Device, std::string(name));
    }

    /// Creates pin `device:role` attached to `device` and `net`.
    NodeId add_pin(NodeId device, std::string_view role, NodeId net) {
        if (nodes_.at(device).kind != NodeKind::Device) throw ArgumentError("add_pin: owner is not a device");
        if (nodes_.at(net).kind != NodeKind::Net) throw ArgumentError("add_pin: target is not a net");
        const std::string name = nodes_[device].name + ":" + std::string(role);
        if (find(NodeKind::Pin, name)) throw ValueError("duplicate pin '" + name + "'");
        const NodeId pin = add_node(NodeKind::Pin, name);
        struct_edges_.push_back({device, pin, StructEdgeKind::DevicePin});
        struct_edges_.push_back({net, pin, StructEdgeKind::NetPin});
        pin_net_.emplace(pin, net);
        return pin;
    }

    /// Net a pin is attached to; a net maps to itself.
    NodeId net_of(NodeId id) const {
        const auto& n = nodes_.at(id);
        if (n.kind == NodeKind::Net) return id;
        if (n.kind == NodeKind::Pin) return pin_net_.at(id);
        throw ArgumentError("net_of: '" + n.name + "' is a device");
    }

    static CouplingKind coupling_kind(NodeKind a, NodeKind b) {
        if (a == NodeKind::Device || b == NodeKind::Device) {
            throw ValueError("coupling endpoints must be nets or pins");
        }
        if (a == NodeKind::Net && b == NodeKind::Net) return CouplingKind::NetNet;
        if (a == NodeKind::Pin && b == NodeKind::Pin) return CouplingKind::PinPin;
        return CouplingKind::PinNet;
    }

    /// Adds a candidate edge or, if the unordered pair already exists,
    /// merges into it: labels are summed, an unlabeled edge adopts the label.
    std::size_t add_candidate(NodeId a, NodeId b, std::optional<double> label = std::nullopt) {
        if (a == b) throw ValueError("coupling edge from '" + nodes_.at(a).name + "' to itself");
        if (label && !(*label > 0.0)) {
            throw ValueError("coupling capacitance must be positive, got " + std::to_string(*label));
        }
        const CouplingKind kind = coupling_kind(nodes_.at(a).kind, nodes_.at(b).kind);
        const auto key = pair_key(a, b);
        if (auto it = candidate_index_.find(key); it != candidate_index_.end()) {
            auto& e = candidate_edges_[it->second];
            if (label) e.label = e.label.value_or(0.0) + *label;
            return it->second;
        }
        candidate_edges_.push_back({a, b, kind, label});
        candidate_index_.emplace(key, candidate_edges_.size() - 1);
        return candidate_edges_.size() - 1;
    }

    void set_candidate_label(std::size_t index, std::optional<double> label) {
        if (label && !(*label > 0.0)) throw ValueError("coupling capacitance must be positive");
        candidate_edges_.at(index).label = label;
    }

    void set_ground_cap(NodeId net, std::optional<double> value) {
        if (nodes_.at(net).kind != NodeKind::Net) throw ArgumentError("ground capacitance belongs to nets only");
        if (value && *value < 0.0) throw ValueError("negative ground capacitance");
        ground_caps_[net] = value;
    }

    void add_ground_cap(NodeId net, double value) {
        if (value < 0.0) throw ValueError("negative ground capacitance");
        auto it = ground_caps_.find(net);
        set_ground_cap(net, (it != ground_caps_.end() && it->second ? *it->second : 0.0) + value);
    }

    /// Structural degree of every node (number of incident struct edges).
    std::vector<std::size_t> degrees() const {
        std::vector<std::size_t> d(nodes_.size(), 0);
        for (const auto& e : struct_edges_) {
            ++d[e.owner];
            ++d[e.pin];
        }
        return d;
    }

    /// Rebuilds a graph from its serialized parts and checks every invariant.
    static CircuitGraph from_parts(std::vector<CircuitNode> nodes, std::vector<StructEdge> struct_edges,
                                   std::vector<CandidateEdge> candidates,
                                   std::map<NodeId, std::optional<double>> ground_caps) {
        CircuitGraph g;
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            if (nodes[i].id != i) throw ValueError("node ids must be dense and ordered");
            if (static_cast<std::uint8_t>(nodes[i].kind) > 2) throw ValueError("unknown node kind");
            if (!g.index_[static_cast<std::size_t>(nodes[i].kind)].emplace(nodes[i].name, nodes[i].id).second) {
                throw ValueError("duplicate " + std::string(to_string(nodes[i].kind)) + " name '" + nodes[i].name + "'");
            }
        }
        g.nodes_ = std::move(nodes);
        for (const auto& e : struct_edges) {
            if (e.owner >= g.nodes_.size() || e.pin >= g.nodes_.size()) throw ValueError("structural edge id out of range");
            if (e.kind == StructEdgeKind::NetPin) g.pin_net_[e.pin] = e.owner;
        }
        g.struct_edges_ = std::move(struct_edges);
        for (const auto& c : candidates) {
            if (c.a >= g.nodes_.size() || c.b >= g.nodes_.size() || c.a == c.b) {
                throw ValueError("candidate edge endpoint invalid");
            }
            if (!g.candidate_index_.emplace(pair_key(c.a, c.b), g.candidate_edges_.size()).second) {
                throw ValueError("duplicate candidate edge");
            }
            g.candidate_edges_.push_back(c);
        }
        for (const auto& [id, v] : ground_caps) {
            if (id >= g.nodes_.size()) throw ValueError("ground capacitance id out of range");
            if (g.nodes_[id].kind != NodeKind::Net) throw ValueError("ground capacitance on a non-net node");
            if (v && !(*v >= 0.0)) throw ValueError("negative ground capacitance");
            g.ground_caps_[id] = v;
        }
        g.validate();
        return g;
    }

    friend bool operator==(const CircuitGraph& a, const CircuitGraph& b) {
        auto node_eq = [](const CircuitNode& x, const CircuitNode& y) {
            return x.id == y.id && x.kind == y.kind && x.name == y.name;
        };
        auto se_eq = [](const StructEdge& x, const StructEdge& y) {
            return x.owner == y.owner && x.pin == y.pin && x.kind == y.kind;
        };
        auto ce_eq = [](const CandidateEdge& x, const CandidateEdge& y) {
            return x.a == y.a && x.b == y.b && x.kind == y.kind && x.label == y.label;
        };
        return std::equal(a.nodes_.begin(), a.nodes_.end(), b.nodes_.begin(), b.nodes_.end(), node_eq) &&
               std::equal(a.struct_edges_.begin(), a.struct_edges_.end(), b.struct_edges_.begin(),
                          b.struct_edges_.end(), se_eq) &&
               std::equal(a.candidate_edges_.begin(), a.candidate_edges_.end(), b.candidate_edges_.begin(),
                          b.candidate_edges_.end(), ce_eq) &&
               a.ground_caps_ == b.ground_caps_;
    }

    /// Throws ValueError naming the first violated invariant.
    void validate() const {
        std::vector<int> device_pin(nodes_.size(), 0), net_pin(nodes_.size(), 0);
        for (const auto& e : struct_edges_) {
            const auto ok = nodes_.at(e.pin).kind == NodeKind::Pin &&
                            nodes_.at(e.owner).kind ==
                                (e.kind == StructEdgeKind::DevicePin ? NodeKind::Device : NodeKind::Net);
            if (!ok) throw ValueError("structural edge connects invalid node kinds");
            ++(e.kind == StructEdgeKind::DevicePin ? device_pin : net_pin)[e.pin];
        }
        for (const auto& n : nodes_) {
            if (n.kind == NodeKind::Pin && (device_pin[n.id] != 1 || net_pin[n.id] != 1)) {
                throw ValueError("pin '" + n.name + "' must have exactly one device and one net edge");
            }
        }
        for (const auto& c : candidate_edges_) {
            if (c.label && !(*c.label > 0.0)) throw ValueError("non-positive coupling label");
            if (coupling_kind(nodes_.at(c.a).kind, nodes_.at(c.b).kind) != c.kind) {
                throw ValueError("candidate edge kind disagrees with its endpoints");
            }
        }
    }

private:
    NodeId add_node(NodeKind kind, std::string name) {
        const auto id = static_cast<NodeId>(nodes_.size());
        index_[static_cast<std::size_t>(kind)].emplace(name, id);
        nodes_.push_back({id, kind, std::move(name)});
        return id;
    }

    static std::uint64_t pair_key(NodeId a, NodeId b) {
        if (a > b) std::swap(a, b);
        return (static_cast<std::uint64_t>(a) << 32) | b;
    }

    std::vector<CircuitNode> nodes_;
    std::vector<StructEdge> struct_edges_;
    std::vector<CandidateEdge> candidate_edges_;
    std::map<NodeId, std::optional<double>> ground_caps_;
    std::array<std::unordered_map<std::string, NodeId>, 3> index_;
    std::unordered_map<NodeId, NodeId> pin_net_;
    std::unordered_map<std::uint64_t, std::size_t> candidate_index_;
};

// ---------------------------------------------------------------------------
// Labels
// ---------------------------------------------------------------------------

enum class LabelMode { Regression, Classification };

/// Capacitance range and class count. Normalization is log10 min-max over the
/// declared range [lo, hi], independent of the observed data.
struct LabelSpec {
    LabelMode mode = LabelMode::Regression;
    double lo = 1e-21;
    double hi = 1e-15;
    std::size_t n_classes = 5;

    void validate() const {
        if (!(lo > 0.0 && lo < hi)) throw ArgumentError("label range requires 0 < lo < hi");
        if (n_classes < 2) throw ArgumentError("n_classes must be at least 2");
    }
    bool contains(double farads) const { return farads >= lo && farads <= hi; }
    friend bool operator==(const LabelSpec&, const LabelSpec&) = default;
};

inline double normalize_label(double farads, const LabelSpec& spec) {
    if (!spec.contains(farads)) {
        throw ContractError("label " + std::to_string(farads) + " F is outside the regression range; filter first");
    }
    const double llo = std::log10(spec.lo);
    const double t = (std::log10(farads) - llo) / (std::log10(spec.hi) - llo);
    return std::clamp(t, 0.0, 1.0);
}

inline std::vector<double> normalize_labels(std::span<const double> farads, const LabelSpec& spec) {
    spec.validate();
    std::vector<double> out;
    out.reserve(farads.size());
    for (double v : farads) out.push_back(normalize_label(v, spec));
    return out;
}

inline double denormalize_label(double t, const LabelSpec& spec) {
    const double llo = std::log10(spec.lo);
    return std::pow(10.0, llo + t * (std::log10(spec.hi) - llo));
}

/// Decades spanned by the normalized axis (used to express MAE in decades).
inline double decades(const LabelSpec& spec) { return std::log10(spec.hi) - std::log10(spec.lo); }

/// Equal-width bin of a normalized value; 1.0 lands in the top class.
inline std::size_t bin_index(double normalized, std::size_t n_classes) {
    if (!(normalized >= 0.0 && normalized <= 1.0)) {
        throw ContractError("value " + std::to_string(normalized) + " is outside [0, 1]");
    }
    if (n_classes == 0) throw ArgumentError("n_classes must be positive");
    return std::min(static_cast<std::size_t>(normalized * static_cast<double>(n_classes)), n_classes - 1);
}

inline std::vector<std::size_t> bin_ground_caps(std::span<const double> normalized, std::size_t n_classes) {
    std::vector<std::size_t> out;
    out.reserve(normalized.size());
    for (double v : normalized) out.push_back(bin_index(v, n_classes));
    return out;
}

/// Drops labels outside the regression range (they become unlabeled).
/// Returns the number of labels removed.
inline std::size_t filter_labels(CircuitGraph& g, const LabelSpec& spec) {
    std::size_t dropped = 0;
    for (std::size_t i = 0; i < g.candidate_edges().size(); ++i) {
        const auto& label = g.candidate_edges()[i].label;
        if (label && !spec.contains(*label)) {
            g.set_candidate_label(i, std::nullopt);
            ++dropped;
        }
    }
    return dropped;
}

}  // namespace circuitgcl
