#include "gridsense/placement.hpp"

#include <algorithm>
#include <numeric>

#include "gridsense/graph.hpp"

namespace gridsense {

PlacementGenome PlacementGenome::from_bus_numbers(int n, std::span<const int> numbers) {
  PlacementGenome g(n);
  for (int b : numbers) {
    if (b < 1 || b > n) throw ValidationError("bus number " + std::to_string(b) + " out of range");
    g.set(b - 1, true);
  }
  return g;
}

std::vector<int> PlacementGenome::bus_numbers() const {
  std::vector<int> out;
  for (int i = 0; i < size(); ++i)
    if (bits_[i]) out.push_back(i + 1);
  return out;
}

int PlacementGenome::popcount() const {
  return static_cast<int>(std::count_if(bits_.begin(), bits_.end(), [](auto b) { return b != 0; }));
}

std::string PlacementGenome::key() const {
  std::string s(bits_.size(), '0');
  for (std::size_t i = 0; i < bits_.size(); ++i)
    if (bits_[i]) s[i] = '1';
  return s;
}

int hamming(const PlacementGenome& a, const PlacementGenome& b) {
  if (a.size() != b.size()) throw ValidationError("genome length mismatch");
  int d = 0;
  for (int i = 0; i < a.size(); ++i) d += a[i] != b[i];
  return d;
}

void ConstraintConfig::validate() const {
  if (radius < 0) throw ConfigError("coverage radius must be non-negative");
  if (min_redundancy < 1) throw ConfigError("R_min must be at least 1");
  if (w_connectivity < 0 || w_coverage < 0 || w_redundancy < 0)
    throw ConfigError("violation weights must be non-negative");
}

namespace {

void check_size(const PowerNetwork& net, const PlacementGenome& g) {
  if (g.size() != net.size()) throw ValidationError("genome length does not match bus count");
}

std::vector<int> sensors_in_reach(const std::vector<std::vector<int>>& hood, const PlacementGenome& g) {
  std::vector<int> u(hood.size(), 0);
  for (std::size_t j = 0; j < hood.size(); ++j)
    for (int i : hood[j]) u[j] += g[i];
  return u;
}

double coverage_from_reach(const std::vector<int>& u, std::span<const double> w) {
  double sum = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j)
    if (u[j] < 1) sum += w[j];
  return sum / static_cast<double>(u.size());
}

double redundancy_from_reach(const std::vector<int>& u, int min_redundancy) {
  double sum = 0.0;
  for (int uj : u) sum += std::max(min_redundancy - uj, 0);
  return sum / static_cast<double>(u.size());
}

}  // namespace

double check_connectivity(const PowerNetwork& net, const PlacementGenome& genome) {
  check_size(net, genome);
  return induced_connected(net.neighbors(), genome.bits()) ? 0.0 : 1.0;
}

double coverage_penalty(const PowerNetwork& net, const PlacementGenome& genome, int radius,
                        std::span<const double> node_weights) {
  check_size(net, genome);
  if (static_cast<int>(node_weights.size()) != net.size()) throw ValidationError("node weight count mismatch");
  return coverage_from_reach(sensors_in_reach(hop_neighborhoods(net.neighbors(), radius), genome), node_weights);
}

double redundancy_penalty(const PowerNetwork& net, const PlacementGenome& genome, int radius,
                          int min_redundancy) {
  check_size(net, genome);
  return redundancy_from_reach(sensors_in_reach(hop_neighborhoods(net.neighbors(), radius), genome),
                               min_redundancy);
}

ConstraintReport total_violation(const PowerNetwork& net, const PlacementGenome& genome,
                                 const ConstraintConfig& config, std::span<const double> node_weights) {
  Vector w = Eigen::Map<const Vector>(node_weights.data(), static_cast<Eigen::Index>(node_weights.size()));
  return PlacementProblem(net, config, std::move(w)).evaluate(genome);
}

PlacementProblem::PlacementProblem(const PowerNetwork& net, ConstraintConfig config, Vector node_weights)
    : net_(&net), config_(config), weights_(std::move(node_weights)) {
  config_.validate();
  if (weights_.size() != net.size()) throw ValidationError("node weight count mismatch");
  hood_ = hop_neighborhoods(net.neighbors(), config_.radius);
}

double PlacementProblem::coverage(const PlacementGenome& genome) const {
  check_size(*net_, genome);
  return coverage_from_reach(sensors_in_reach(hood_, genome),
                             {weights_.data(), static_cast<std::size_t>(weights_.size())});
}

double PlacementProblem::redundancy(const PlacementGenome& genome) const {
  check_size(*net_, genome);
  return redundancy_from_reach(sensors_in_reach(hood_, genome), config_.min_redundancy);
}

ConstraintReport PlacementProblem::evaluate(const PlacementGenome& genome) const {
  check_size(*net_, genome);
  const auto u = sensors_in_reach(hood_, genome);
  ConstraintReport r;
  r.p_connectivity = induced_connected(net_->neighbors(), genome.bits()) ? 0.0 : 1.0;
  r.p_coverage = coverage_from_reach(u, {weights_.data(), static_cast<std::size_t>(weights_.size())});
  r.p_redundancy = redundancy_from_reach(u, config_.min_redundancy);
  r.w_connectivity = config_.w_connectivity;
  r.w_coverage = config_.w_coverage;
  r.w_redundancy = config_.w_redundancy;
  r.total = r.w_connectivity * r.p_connectivity + r.w_coverage * r.p_coverage +
            r.w_redundancy * r.p_redundancy;
  return r;
}

}  // namespace gridsense
