#include "gridsense/graph.hpp"

#include <algorithm>
#include <queue>
#include <stdexcept>

namespace gridsense {

AdjacencyList make_adjacency(int n, std::span<const std::pair<int, int>> edges) {
  AdjacencyList adj(static_cast<std::size_t>(n));
  for (auto [u, v] : edges) {
    if (u < 0 || v < 0 || u >= n || v >= n) throw std::out_of_range("edge endpoint out of range");
    if (u == v) continue;
    adj[u].push_back(v);
    adj[v].push_back(u);
  }
  for (auto& nb : adj) {
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
  }
  return adj;
}

std::vector<int> bfs_distances(const AdjacencyList& adj, int source, int max_depth) {
  std::vector<int> dist(adj.size(), -1);
  std::queue<int> q;
  dist[source] = 0;
  q.push(source);
  while (!q.empty()) {
    const int u = q.front();
    q.pop();
    if (max_depth >= 0 && dist[u] >= max_depth) continue;
    for (int v : adj[u]) {
      if (dist[v] < 0) {
        dist[v] = dist[u] + 1;
        q.push(v);
      }
    }
  }
  return dist;
}

std::vector<int> connected_components(const AdjacencyList& adj) {
  std::vector<int> comp(adj.size(), -1);
  int next = 0;
  for (std::size_t s = 0; s < adj.size(); ++s) {
    if (comp[s] >= 0) continue;
    std::vector<int> stack{static_cast<int>(s)};
    comp[s] = next;
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      for (int v : adj[u]) {
        if (comp[v] < 0) {
          comp[v] = next;
          stack.push_back(v);
        }
      }
    }
    ++next;
  }
  return comp;
}

std::vector<std::vector<int>> hop_neighborhoods(const AdjacencyList& adj, int r) {
  std::vector<std::vector<int>> out(adj.size());
  for (std::size_t j = 0; j < adj.size(); ++j) {
    const auto dist = bfs_distances(adj, static_cast<int>(j), r);
    for (std::size_t i = 0; i < adj.size(); ++i)
      if (dist[i] >= 0) out[j].push_back(static_cast<int>(i));
  }
  return out;
}

bool induced_connected(const AdjacencyList& adj, std::span<const std::uint8_t> selected) {
  const auto first = std::find_if(selected.begin(), selected.end(), [](auto b) { return b != 0; });
  if (first == selected.end()) return false;
  const int root = static_cast<int>(first - selected.begin());
  std::vector<std::uint8_t> seen(adj.size(), 0);
  std::vector<int> stack{root};
  seen[root] = 1;
  std::size_t reached = 1;
  while (!stack.empty()) {
    const int u = stack.back();
    stack.pop_back();
    for (int v : adj[u]) {
      if (selected[v] && !seen[v]) {
        seen[v] = 1;
        ++reached;
        stack.push_back(v);
      }
    }
  }
  const auto total = static_cast<std::size_t>(std::count_if(
      selected.begin(), selected.end(), [](auto b) { return b != 0; }));
  return reached == total;
}

}  // namespace gridsense
