#pragma once

#include "gridsense/common.hpp"
#include "gridsense/graph.hpp"
#include "gridsense/netmodel.hpp"

namespace gridsense {

struct ImportanceWeights {
  double bc = 0.25;   // betweenness
  double eic = 0.25;  // eigenvector
  double ebc = 0.25;  // electrical betweenness
  double ecd = 0.25;  // electrical coupling connection degree

  void validate() const;
};

struct ImportanceScores {
  Vector score;  // S_I in [0, 1]
  Vector betweenness, eigenvector, electrical_betweenness, coupling_degree;  // raw
  Vector betweenness_n, eigenvector_n, electrical_betweenness_n, coupling_degree_n;
  double eigenvalue = 0.0;
};

/// Shortest-path betweenness over unordered (s, t) pairs, unweighted edges
/// (Brandes accumulation). The parallel path splits sources across threads.
Vector betweenness(const AdjacencyList& adj, Exec exec = Exec::parallel);
inline Vector betweenness(const PowerNetwork& net, Exec exec = Exec::parallel) {
  return betweenness(net.neighbors(), exec);
}

struct EigenvectorResult {
  Vector centrality;  // non-negative, unit L2 norm per connected component
  double eigenvalue = 0.0;
  int iterations = 0;
};

/// Power iteration on A + I (same eigenvectors as A, but no +-lambda
/// oscillation on bipartite graphs), per connected component.
EigenvectorResult eigenvector_centrality(const AdjacencyList& adj, double tolerance = 1e-10,
                                         int max_iterations = 10000);

/// Generator set G and load set L with their weights W (capacity, apparent
/// base load).
struct TransferSets {
  std::vector<int> generators;
  std::vector<double> gen_weight;
  std::vector<int> loads;
  std::vector<double> load_weight;
};

TransferSets transfer_sets(const PowerNetwork& net);

/// B_e(n) = sum_{i in G, j in L} sqrt(W_i W_j) B_e,ij(n), returned already
/// divided by sum sqrt(W_i W_j) (C_EBC). Unit injection at i withdrawn at j
/// gives node voltages Z(:,i) - Z(:,j); link currents use the series
/// admittance -Y_mn. Pairs in different components are skipped.
Vector electrical_betweenness(const PowerNetwork& net, const TransferSets& sets, Exec exec = Exec::parallel);
inline Vector electrical_betweenness(const PowerNetwork& net, Exec exec = Exec::parallel) {
  return electrical_betweenness(net, transfer_sets(net), exec);
}

/// Effective-impedance distance |Z_vv + Z_uu - 2 Z_vu|.
double resistance_distance(const CMatrix& zbus, int u, int v);

/// C_ECD(v) = 1 / sum_{u != v, same component} d(u, v); 0 when the sum is 0.
Vector electrical_coupling_degree(const PowerNetwork& net);

/// C / max(C); an identically zero metric stays zero.
Vector max_normalize(const Vector& raw);

ImportanceScores importance_scores(const PowerNetwork& net, const ImportanceWeights& weights = {},
                                   Exec exec = Exec::parallel);

}  // namespace gridsense
