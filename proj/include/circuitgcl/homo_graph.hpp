#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <vector>

#include "autodiff.hpp"
#include "circuit_graph.hpp"

namespace circuitgcl {

/// Homogeneous undirected graph in CSR form. Neighbor lists are sorted by id.
struct HomoGraph {
    std::size_t n = 0;
    std::vector<std::uint8_t> x;            // type code: Net 0, Device 1, Pin 2
    std::vector<std::uint64_t> offsets{0};  // n + 1 entries
    std::vector<std::uint32_t> targets;
    std::vector<std::uint32_t> degrees;
    std::vector<NodeId> origin;  // homogeneous id -> CircuitGraph node id

    std::span<const std::uint32_t> neighbors(std::size_t i) const {
        return {targets.data() + offsets[i], offsets[i + 1] - offsets[i]};
    }
    std::size_t edge_count() const { return targets.size() / 2; }
    std::uint32_t max_degree() const {
        return degrees.empty() ? 0 : *std::max_element(degrees.begin(), degrees.end());
    }
    AdjacencyView view() const { return {offsets, targets}; }

    bool has_edge(std::uint32_t i, std::uint32_t j) const {
        auto nb = neighbors(i);
        return std::binary_search(nb.begin(), nb.end(), j);
    }

    /// Throws ValueError on any broken structural invariant.
    void validate() const {
        if (x.size() != n || degrees.size() != n || origin.size() != n || offsets.size() != n + 1) {
            throw ValueError("homogeneous graph arrays disagree with node count");
        }
        if (offsets.front() != 0 || offsets.back() != targets.size()) throw ValueError("CSR offsets do not span targets");
        for (std::size_t i = 0; i < n; ++i) {
            if (offsets[i] > offsets[i + 1]) throw ValueError("CSR offsets are not monotone");
            if (x[i] > 2) throw ValueError("type code outside {0,1,2}");
            const auto nb = neighbors(i);
            if (degrees[i] != nb.size()) throw ValueError("degree disagrees with adjacency");
            for (std::size_t k = 0; k < nb.size(); ++k) {
                if (nb[k] >= n) throw ValueError("neighbor id out of range");
                if (nb[k] == i) throw ValueError("self loop");
                if (k && nb[k - 1] >= nb[k]) throw ValueError("neighbor list not strictly sorted");
                if (!has_edge(nb[k], static_cast<std::uint32_t>(i))) throw ValueError("adjacency is not symmetric");
            }
        }
    }

    friend bool operator==(const HomoGraph&, const HomoGraph&) = default;
};

/// Builds a CSR graph from an undirected edge list. Duplicate edges collapse.
inline HomoGraph homo_from_edges(std::vector<std::uint8_t> types,
                                 std::span<const std::pair<std::uint32_t, std::uint32_t>> edges,
                                 std::vector<NodeId> origin = {}) {
    HomoGraph h;
    h.n = types.size();
    h.x = std::move(types);
    if (origin.empty()) {
        origin.resize(h.n);
        for (std::size_t i = 0; i < h.n; ++i) origin[i] = static_cast<NodeId>(i);
    }
    h.origin = std::move(origin);
    std::vector<std::vector<std::uint32_t>> adj(h.n);
    for (auto [a, b] : edges) {
        if (a >= h.n || b >= h.n) throw ArgumentError("edge endpoint out of range");
        if (a == b) continue;
        adj[a].push_back(b);
        adj[b].push_back(a);
    }
    h.offsets.assign(1, 0);
    h.degrees.resize(h.n);
    for (std::size_t i = 0; i < h.n; ++i) {
        auto& l = adj[i];
        std::sort(l.begin(), l.end());
        l.erase(std::unique(l.begin(), l.end()), l.end());
        h.targets.insert(h.targets.end(), l.begin(), l.end());
        h.offsets.push_back(h.targets.size());
        h.degrees[i] = static_cast<std::uint32_t>(l.size());
    }
    return h;
}

/// One homogeneous node per circuit node (same ids); structural edges only.
/// Candidate coupling edges never enter the adjacency.
inline HomoGraph homogenize(const CircuitGraph& g) {
    std::vector<std::uint8_t> types;
    types.reserve(g.node_count());
    for (const auto& n : g.nodes()) types.push_back(static_cast<std::uint8_t>(n.kind));
    std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
    edges.reserve(g.struct_edges().size());
    for (const auto& e : g.struct_edges()) edges.emplace_back(e.owner, e.pin);
    return homo_from_edges(std::move(types), edges);
}

}  // namespace circuitgcl
