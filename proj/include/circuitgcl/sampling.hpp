#pragma once

#include <unordered_map>
#include <vector>

#include "homo_graph.hpp"
#include "rng.hpp"

namespace circuitgcl {

/// Induced subgraph. Local index k refers to node_ids[k]; anchors come first.
struct Subgraph {
    std::vector<std::uint32_t> node_ids;
    std::vector<std::uint32_t> anchors;  // global ids
    std::vector<std::uint64_t> offsets{0};
    std::vector<std::uint32_t> targets;  // local indices, sorted per row
    std::unordered_map<std::uint32_t, std::uint32_t> local;

    std::size_t size() const { return node_ids.size(); }
    AdjacencyView view() const { return {offsets, targets}; }
    std::uint32_t local_of(std::uint32_t global) const {
        auto it = local.find(global);
        if (it == local.end()) throw ArgumentError("node " + std::to_string(global) + " is not in the subgraph");
        return it->second;
    }
};

/// Builds the induced adjacency over `ids` (in the given order).
inline Subgraph induce(const HomoGraph& g, std::vector<std::uint32_t> ids, std::vector<std::uint32_t> anchors) {
    Subgraph s;
    s.node_ids = std::move(ids);
    s.anchors = std::move(anchors);
    s.local.reserve(s.node_ids.size());
    for (std::size_t k = 0; k < s.node_ids.size(); ++k) {
        if (s.node_ids[k] >= g.n) throw ArgumentError("node id " + std::to_string(s.node_ids[k]) + " out of range");
        if (!s.local.emplace(s.node_ids[k], static_cast<std::uint32_t>(k)).second) {
            throw ArgumentError("duplicate node id in subgraph");
        }
    }
    std::vector<std::uint32_t> row;
    for (std::uint32_t id : s.node_ids) {
        row.clear();
        for (std::uint32_t j : g.neighbors(id)) {
            if (auto it = s.local.find(j); it != s.local.end()) row.push_back(it->second);
        }
        std::sort(row.begin(), row.end());
        s.targets.insert(s.targets.end(), row.begin(), row.end());
        s.offsets.push_back(s.targets.size());
    }
    return s;
}

/// Level-synchronous BFS from `anchors`. At each level every frontier node
/// adds at most `fanout` of its not-yet-selected neighbors, drawn uniformly
/// without replacement.
inline Subgraph sample_subgraph(const HomoGraph& g, std::span<const std::uint32_t> anchors, std::size_t hops,
                                std::size_t fanout, std::uint64_t seed) {
    if (fanout < 1) throw ArgumentError("fanout must be at least 1");
    if (anchors.empty()) throw ArgumentError("sampling needs at least one anchor");
    std::vector<std::uint32_t> ids;
    std::vector<char> selected(g.n, 0);
    for (std::uint32_t a : anchors) {
        if (a >= g.n) throw ArgumentError("anchor id " + std::to_string(a) + " out of range (n = " + std::to_string(g.n) + ")");
        if (!selected[a]) {
            selected[a] = 1;
            ids.push_back(a);
        }
    }
    Rng rng(seed);
    std::vector<std::uint32_t> frontier = ids, next, cand;
    for (std::size_t level = 0; level < hops && !frontier.empty(); ++level) {
        next.clear();
        for (std::uint32_t u : frontier) {
            cand.clear();
            for (std::uint32_t v : g.neighbors(u)) {
                if (!selected[v]) cand.push_back(v);
            }
            const std::size_t take = std::min(fanout, cand.size());
            for (std::size_t k = 0; k < take; ++k) {
                const std::size_t pick = k + static_cast<std::size_t>(rng.below(cand.size() - k));
                std::swap(cand[k], cand[pick]);
                selected[cand[k]] = 1;
                ids.push_back(cand[k]);
                next.push_back(cand[k]);
            }
        }
        std::swap(frontier, next);
    }
    return induce(g, std::move(ids), std::vector<std::uint32_t>(anchors.begin(), anchors.end()));
}

inline Subgraph sample_link_subgraph(const HomoGraph& g, std::pair<std::uint32_t, std::uint32_t> anchor_pair,
                                     std::size_t hops, std::size_t fanout, std::uint64_t seed) {
    const std::uint32_t a[2] = {anchor_pair.first, anchor_pair.second};
    return sample_subgraph(g, a, hops, fanout, seed);
}

inline Subgraph sample_node_subgraph(const HomoGraph& g, std::uint32_t anchor, std::size_t hops, std::size_t fanout,
                                     std::uint64_t seed) {
    return sample_subgraph(g, std::span<const std::uint32_t>(&anchor, 1), hops, fanout, seed);
}

}  // namespace circuitgcl
