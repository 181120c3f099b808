#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace gridsense {

/// Undirected simple graph as sorted neighbor lists (no self loops,
/// parallel edges collapsed).
using AdjacencyList = std::vector<std::vector<int>>;

AdjacencyList make_adjacency(int n, std::span<const std::pair<int, int>> edges);

/// Hop distances from `source`; -1 for unreachable nodes. When `max_depth`
/// is non-negative the search stops expanding at that depth.
std::vector<int> bfs_distances(const AdjacencyList& adj, int source, int max_depth = -1);

/// Component id per node, numbered 0.. in order of lowest member.
std::vector<int> connected_components(const AdjacencyList& adj);

/// r-hop neighborhoods N_r(j) = { i : d(i, j) <= r }, each sorted.
std::vector<std::vector<int>> hop_neighborhoods(const AdjacencyList& adj, int r);

/// True when the subgraph induced by `selected` (nonzero entries) is
/// connected. An empty selection is reported as not connected.
bool induced_connected(const AdjacencyList& adj, std::span<const std::uint8_t> selected);

}  // namespace gridsense
