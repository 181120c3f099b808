#include "gridsense/importance.hpp"

#include <cmath>
#include <stdexcept>

#include <omp.h>

namespace gridsense {

namespace {

// Single-source Brandes dependency accumulation into `acc`.
void brandes_source(const AdjacencyList& adj, int s, std::vector<double>& acc, std::vector<int>& order,
                    std::vector<int>& dist, std::vector<double>& sigma, std::vector<double>& delta) {
  order.clear();
  std::fill(dist.begin(), dist.end(), -1);
  std::fill(sigma.begin(), sigma.end(), 0.0);
  std::fill(delta.begin(), delta.end(), 0.0);
  dist[s] = 0;
  sigma[s] = 1.0;
  order.push_back(s);
  for (std::size_t head = 0; head < order.size(); ++head) {
    const int u = order[head];
    for (int v : adj[u]) {
      if (dist[v] < 0) {
        dist[v] = dist[u] + 1;
        order.push_back(v);
      }
      if (dist[v] == dist[u] + 1) sigma[v] += sigma[u];
    }
  }
  for (std::size_t k = order.size(); k-- > 1;) {
    const int w = order[k];
    for (int v : adj[w])
      if (dist[v] == dist[w] - 1) delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
    acc[w] += delta[w];
  }
}

}  // namespace

void ImportanceWeights::validate() const {
  if (bc < 0 || eic < 0 || ebc < 0 || ecd < 0) throw ConfigError("importance weights must be non-negative");
  if (std::abs(bc + eic + ebc + ecd - 1.0) > 1e-9) throw ConfigError("importance weights must sum to 1");
}

Vector betweenness(const AdjacencyList& adj, Exec exec) {
  const int n = static_cast<int>(adj.size());
  Vector out = Vector::Zero(n);
  if (exec == Exec::serial) {
    std::vector<double> acc(n, 0.0), sigma(n), delta(n);
    std::vector<int> order, dist(n);
    for (int s = 0; s < n; ++s) brandes_source(adj, s, acc, order, dist, sigma, delta);
    for (int i = 0; i < n; ++i) out(i) = acc[i] / 2.0;
    return out;
  }
  const int workers = std::max(1, std::min(worker_count(), n));
  std::vector<std::vector<double>> partial(workers, std::vector<double>(n, 0.0));
#pragma omp parallel num_threads(workers)
  {
    const int tid = omp_get_thread_num();
    std::vector<double> sigma(n), delta(n);
    std::vector<int> order, dist(n);
    // Static block partition: each source's contribution lands in a fixed slot.
#pragma omp for schedule(static)
    for (int s = 0; s < n; ++s) brandes_source(adj, s, partial[tid], order, dist, sigma, delta);
  }
  for (int w = 0; w < workers; ++w)
    for (int i = 0; i < n; ++i) out(i) += partial[w][i];
  return out / 2.0;
}

EigenvectorResult eigenvector_centrality(const AdjacencyList& adj, double tolerance, int max_iterations) {
  const int n = static_cast<int>(adj.size());
  if (n == 0) throw ValidationError("eigenvector centrality of an empty graph");
  const auto comp = connected_components(adj);
  const int ncomp = comp.empty() ? 0 : *std::max_element(comp.begin(), comp.end()) + 1;
  EigenvectorResult result{Vector::Zero(n), 0.0, 0};
  for (int c = 0; c < ncomp; ++c) {
    std::vector<int> members;
    for (int i = 0; i < n; ++i)
      if (comp[i] == c) members.push_back(i);
    Vector x = Vector::Zero(n);
    for (int i : members) x(i) = 1.0;
    x.normalize();
    double lambda = 0.0;
    double gap = 0.0;
    bool converged = false;
    int it = 0;
    for (; it < max_iterations; ++it) {
      Vector y = x;  // (A + I) x
      for (int i : members)
        for (int j : adj[i]) y(i) += x(j);
      lambda = y.norm();
      y /= lambda;
      gap = (y - x).lpNorm<Eigen::Infinity>();
      x = std::move(y);
      if (gap <= tolerance) {
        converged = true;
        ++it;
        break;
      }
    }
    if (!converged)
      throw DivergenceError("eigenvector centrality did not converge", gap);
    for (int i : members) result.centrality(i) = std::max(0.0, x(i));
    result.eigenvalue = std::max(result.eigenvalue, lambda - 1.0);
    result.iterations = std::max(result.iterations, it);
  }
  return result;
}

TransferSets transfer_sets(const PowerNetwork& net) {
  TransferSets sets;
  for (const auto& b : net.buses()) {
    if (b.kind != BusKind::load && b.gen_capacity > 0.0) {
      sets.generators.push_back(b.id);
      sets.gen_weight.push_back(b.gen_capacity);
    } else if (b.kind == BusKind::load) {
      const double w = std::hypot(b.base_load_p, b.base_load_q);
      if (w > 0.0) {
        sets.loads.push_back(b.id);
        sets.load_weight.push_back(w);
      }
    }
  }
  return sets;
}

Vector electrical_betweenness(const PowerNetwork& net, const TransferSets& sets, Exec exec) {
  if (sets.generators.empty() || sets.loads.empty())
    throw ValidationError("electrical betweenness needs non-empty generator and load sets");
  const int n = net.size();
  const CMatrix& z = net.zbus();
  const CMatrix& y = net.ybus();
  const auto& comp = net.components();
  const auto& adj = net.neighbors();
  const int ng = static_cast<int>(sets.generators.size());
  const int nl = static_cast<int>(sets.loads.size());
  const int pairs = ng * nl;

  auto pair_contribution = [&](int p, Vector& acc, double& weight_sum) {
    const int gi = sets.generators[p / nl];
    const int lj = sets.loads[p % nl];
    if (comp[gi] != comp[lj]) return;
    const double w = std::sqrt(sets.gen_weight[p / nl] * sets.load_weight[p % nl]);
    weight_sum += w;
    const CVector u = z.col(gi) - z.col(lj);
    for (int node = 0; node < n; ++node) {
      double be = 0.0;
      if (node == gi || node == lj) {
        be = 1.0;
      } else {
        for (int m : adj[node]) be += std::abs((u(m) - u(node)) * (-y(m, node)));
        be *= 0.5;
      }
      acc(node) += w * be;
    }
  };

  Vector total = Vector::Zero(n);
  double weight_total = 0.0;
  if (exec == Exec::serial) {
    for (int p = 0; p < pairs; ++p) pair_contribution(p, total, weight_total);
  } else {
    const int workers = std::max(1, std::min(worker_count(), pairs));
    std::vector<Vector> partial(workers, Vector::Zero(n));
    std::vector<double> wsum(workers, 0.0);
#pragma omp parallel num_threads(workers)
    {
      const int tid = omp_get_thread_num();
#pragma omp for schedule(static)
      for (int p = 0; p < pairs; ++p) pair_contribution(p, partial[tid], wsum[tid]);
    }
    for (int w = 0; w < workers; ++w) {
      total += partial[w];
      weight_total += wsum[w];
    }
  }
  if (weight_total > 0.0) total /= weight_total;
  return total;
}

double resistance_distance(const CMatrix& zbus, int u, int v) {
  return std::abs(zbus(v, v) + zbus(u, u) - 2.0 * zbus(v, u));
}

Vector electrical_coupling_degree(const PowerNetwork& net) {
  const int n = net.size();
  const auto& comp = net.components();
  Vector out = Vector::Zero(n);
  for (int v = 0; v < n; ++v) {
    double sum = 0.0;
    for (int u = 0; u < n; ++u)
      if (u != v && comp[u] == comp[v]) sum += resistance_distance(net.zbus(), u, v);
    out(v) = sum > 0.0 ? 1.0 / sum : 0.0;
  }
  return out;
}

Vector max_normalize(const Vector& raw) {
  const double mx = raw.size() ? raw.maxCoeff() : 0.0;
  if (!(mx > 0.0)) return Vector::Zero(raw.size());
  return raw / mx;
}

ImportanceScores importance_scores(const PowerNetwork& net, const ImportanceWeights& weights, Exec exec) {
  weights.validate();
  ImportanceScores s;
  s.betweenness = betweenness(net, exec);
  const auto eig = eigenvector_centrality(net.neighbors());
  s.eigenvector = eig.centrality;
  s.eigenvalue = eig.eigenvalue;
  s.electrical_betweenness = electrical_betweenness(net, exec);
  s.coupling_degree = electrical_coupling_degree(net);
  s.betweenness_n = max_normalize(s.betweenness);
  s.eigenvector_n = max_normalize(s.eigenvector);
  s.electrical_betweenness_n = max_normalize(s.electrical_betweenness);
  s.coupling_degree_n = max_normalize(s.coupling_degree);
  s.score = weights.bc * s.betweenness_n + weights.eic * s.eigenvector_n +
            weights.ebc * s.electrical_betweenness_n + weights.ecd * s.coupling_degree_n;
  s.score = s.score.cwiseMax(0.0).cwiseMin(1.0);
  return s;
}

}  // namespace gridsense
