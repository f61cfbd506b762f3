#pragma once

#include <array>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "circuit_graph.hpp"
#include "rng.hpp"

namespace circuitgcl {

enum class CellKind : std::uint8_t { Inverter = 0, Nand = 1, SramBitcell = 2, AnalogPair = 3 };

struct SynthConfig {
    std::size_t n_cells = 200;
    /// Mix weights for {inverter, nand, sram_bitcell, analog_pair}.
    std::array<double, 4> cell_mix{0.4, 0.3, 0.2, 0.1};
    double coupling_density = 0.5;
    double noise_sigma = 0.05;
    std::uint64_t seed = 0;
    LabelSpec labels{};

    void validate() const {
        if (n_cells == 0) throw ArgumentError("n_cells must be positive");
        if (!(coupling_density > 0.0 && coupling_density <= 1.0)) {
            throw ArgumentError("coupling_density must lie in (0, 1]");
        }
        if (!(noise_sigma >= 0.0)) throw ArgumentError("noise_sigma must be non-negative");
        double total = 0.0;
        for (double w : cell_mix) {
            if (!(w >= 0.0)) throw ArgumentError("cell mix weights must be non-negative");
            total += w;
        }
        if (!(total > 0.0)) throw ArgumentError("cell mix has no positive weight");
        labels.validate();
    }
};

/// Label-rule constants, on the normalized (log-decade) axis:
///   t = base[kind] + kFanoutSlope * (F - 2) + kDegreeSlope * (M - 2) + noise
/// F is the largest fan-out among the endpoints' signal nets (supply nets do
/// not count), M the smaller endpoint degree. t is clamped to [0, 1].
/// Ground capacitance of a signal net: t = kGroundBase + kGroundSlope * (fanout - 2) + noise,
/// except single-pin stubs, which sit at kStubGround + noise.
struct SynthRule {
    static constexpr std::array<double, 3> kBase{0.33, 0.39, 0.27};  // indexed by CouplingKind
    static constexpr double kFanoutSlope = 0.035;
    static constexpr double kDegreeSlope = 0.01;
    static constexpr double kGroundBase = 0.38;
    static constexpr double kGroundSlope = 0.05;
    static constexpr double kStubGround = 0.12;
};

/// Nodes per inverter-only design: 11 per cell (2 devices, 8 pins, 1 output
/// net) plus vdd, 0 and one primary input.
constexpr std::size_t inverter_chain_node_count(std::size_t n_cells) { return 11 * n_cells + 3; }

namespace detail {

class SynthBuilder {
public:
    SynthBuilder(const SynthConfig& cfg) : cfg_(cfg), rng_(cfg.seed) {}

    CircuitGraph build() {
        vdd_ = g_.net("vdd");
        gnd_ = g_.net("0");
        for (std::size_t i = 0; i < cfg_.n_cells; ++i) {
            const auto kind = static_cast<CellKind>(rng_.categorical(cfg_.cell_mix));
            add_cell(i, kind);
        }
        label_ground_caps();
        add_candidates();
        return std::move(g_);
    }

private:
    struct Cell {
        std::vector<NodeId> devices;
        std::vector<NodeId> signal_nets;
    };

    bool is_supply(NodeId n) const { return n == vdd_ || n == gnd_; }

    NodeId primary_input(std::size_t k) { return g_.net("pi" + std::to_string(k)); }

    std::vector<NodeId> pick_inputs(std::size_t k) {
        std::vector<NodeId> in;
        std::vector<NodeId> pool = outputs_;
        for (std::size_t j = 0; j < k; ++j) {
            if (pool.empty()) {
                in.push_back(primary_input(j));
                continue;
            }
            const std::size_t idx = static_cast<std::size_t>(rng_.below(pool.size()));
            in.push_back(pool[idx]);
            pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(idx));
        }
        return in;
    }

    NodeId mos(Cell& cell, const std::string& name, NodeId d, NodeId gate, NodeId s, bool pmos) {
        const NodeId dev = g_.add_device(name);
        g_.add_pin(dev, "d", d);
        g_.add_pin(dev, "g", gate);
        g_.add_pin(dev, "s", s);
        g_.add_pin(dev, "b", pmos ? vdd_ : gnd_);
        cell.devices.push_back(dev);
        return dev;
    }

    void add_cell(std::size_t i, CellKind kind) {
        const std::string p = "c" + std::to_string(i) + "/";
        Cell cell;
        switch (kind) {
            case CellKind::Inverter: {
                const auto in = pick_inputs(1);
                const NodeId out = g_.net(p + "out");
                mos(cell, p + "mp", out, in[0], vdd_, true);
                mos(cell, p + "mn", out, in[0], gnd_, false);
                cell.signal_nets = {in[0], out};
                outputs_.push_back(out);
                break;
            }
            case CellKind::Nand: {
                const auto in = pick_inputs(2);
                const NodeId out = g_.net(p + "out");
                const NodeId x = g_.net(p + "x");
                mos(cell, p + "mpa", out, in[0], vdd_, true);
                mos(cell, p + "mpb", out, in[1], vdd_, true);
                mos(cell, p + "mna", out, in[0], x, false);
                mos(cell, p + "mnb", x, in[1], gnd_, false);
                cell.signal_nets = {in[0], in[1], out, x};
                outputs_.push_back(out);
                break;
            }
            case CellKind::SramBitcell: {
                const std::size_t col = n_sram_ % 4, row = n_sram_ / 4;
                ++n_sram_;
                const NodeId q = g_.net(p + "q");
                const NodeId qb = g_.net(p + "qb");
                const NodeId bl = g_.net("bl" + std::to_string(col));
                const NodeId blb = g_.net("blb" + std::to_string(col));
                const NodeId wl = g_.net("wl" + std::to_string(row));
                mos(cell, p + "pu1", q, qb, vdd_, true);
                mos(cell, p + "pd1", q, qb, gnd_, false);
                mos(cell, p + "pu2", qb, q, vdd_, true);
                mos(cell, p + "pd2", qb, q, gnd_, false);
                mos(cell, p + "ax1", bl, wl, q, false);
                mos(cell, p + "ax2", blb, wl, qb, false);
                cell.signal_nets = {q, qb, bl, blb, wl};
                outputs_.push_back(q);
                break;
            }
            case CellKind::AnalogPair: {
                const auto in = pick_inputs(2);
                const NodeId d1 = g_.net(p + "d1");
                const NodeId d2 = g_.net(p + "d2");
                const NodeId tail = g_.net(p + "tail");
                const NodeId bias = g_.net(p + "bias");
                mos(cell, p + "m1", d1, in[0], tail, false);
                mos(cell, p + "m2", d2, in[1], tail, false);
                mos(cell, p + "mt", tail, bias, gnd_, false);
                mos(cell, p + "m3", d1, d1, vdd_, true);
                mos(cell, p + "m4", d2, d1, vdd_, true);
                cell.signal_nets = {in[0], in[1], d1, d2, tail, bias};
                outputs_.push_back(d2);
                break;
            }
        }
        cells_.push_back(std::move(cell));
    }

    std::size_t net_degree(NodeId net) const { return degree_.at(net); }

    double fanout_term(NodeId a, NodeId b) const {
        std::size_t f = 2;
        for (NodeId n : {g_.net_of(a), g_.net_of(b)}) {
            if (!is_supply(n)) f = std::max(f, net_degree(n));
        }
        return static_cast<double>(f);
    }

    void label_ground_caps() {
        degree_ = g_.degrees();
        for (const auto& n : g_.nodes()) {
            if (n.kind != NodeKind::Net) continue;
            if (is_supply(n.id)) {
                g_.set_ground_cap(n.id, std::nullopt);
                continue;
            }
            const double noise = rng_.normal(0.0, cfg_.noise_sigma);
            const std::size_t deg = net_degree(n.id);
            const double base = deg <= 1 ? SynthRule::kStubGround
                                         : SynthRule::kGroundBase + SynthRule::kGroundSlope * (static_cast<double>(deg) - 2.0);
            const double t = std::clamp(base + noise, 0.0, 1.0);
            g_.set_ground_cap(n.id, denormalize_label(t, cfg_.labels));
        }
    }

    void propose(NodeId a, NodeId b) {
        if (a == b) return;
        const auto key = a < b ? std::make_pair(a, b) : std::make_pair(b, a);
        if (!seen_.insert(key).second) return;
        if (!rng_.bernoulli(cfg_.coupling_density)) return;
        const auto kind = CircuitGraph::coupling_kind(g_.node(a).kind, g_.node(b).kind);
        const double m = static_cast<double>(std::min(degree_[a], degree_[b]));
        const double t = std::clamp(SynthRule::kBase[static_cast<std::size_t>(kind)] +
                                        SynthRule::kFanoutSlope * (fanout_term(a, b) - 2.0) +
                                        SynthRule::kDegreeSlope * (m - 2.0) + rng_.normal(0.0, cfg_.noise_sigma),
                                    0.0, 1.0);
        g_.add_candidate(a, b, denormalize_label(t, cfg_.labels));
    }

    std::vector<NodeId> cell_pins(const Cell& cell) const {
        // Pins of a device are created consecutively in d, g, s, b order.
        std::vector<NodeId> pins;
        for (NodeId dev : cell.devices) {
            for (NodeId k = 1; k <= 3; ++k) pins.push_back(dev + k);
        }
        return pins;
    }

    void add_candidates() {
        for (std::size_t i = 0; i < cells_.size(); ++i) {
            const Cell& cell = cells_[i];
            for (NodeId dev : cell.devices) {
                const NodeId d = dev + 1, gate = dev + 2, s = dev + 3;
                propose(gate, d);
                propose(gate, s);
            }
            for (NodeId pin : cell_pins(cell)) {
                for (NodeId net : cell.signal_nets) {
                    if (g_.net_of(pin) != net) propose(pin, net);
                }
            }
            for (std::size_t x = 0; x < cell.signal_nets.size(); ++x) {
                for (std::size_t y = x + 1; y < cell.signal_nets.size(); ++y) {
                    propose(cell.signal_nets[x], cell.signal_nets[y]);
                }
            }
            if (i + 1 < cells_.size()) {
                for (NodeId a : cell.signal_nets) {
                    for (NodeId b : cells_[i + 1].signal_nets) propose(a, b);
                }
            }
        }
    }

    const SynthConfig& cfg_;
    Rng rng_;
    CircuitGraph g_;
    NodeId vdd_ = 0, gnd_ = 0;
    std::vector<NodeId> outputs_;
    std::vector<Cell> cells_;
    std::size_t n_sram_ = 0;
    std::vector<std::size_t> degree_;
    std::set<std::pair<NodeId, NodeId>> seen_;
};

}  // namespace detail

/// Seeded synthetic design with topology-derived coupling and ground labels.
inline CircuitGraph synth_generate(const SynthConfig& cfg) {
    cfg.validate();
    return detail::SynthBuilder(cfg).build();
}

}  // namespace circuitgcl
