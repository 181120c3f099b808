#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gridsense/common.hpp"
#include "gridsense/netmodel.hpp"

namespace gridsense {

/// Binary sensor-placement vector over all buses (x_i = 1: sensor at bus i).
class PlacementGenome {
 public:
  PlacementGenome() = default;
  explicit PlacementGenome(int n) : bits_(static_cast<std::size_t>(n), 0) {}
  explicit PlacementGenome(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {}

  /// From 1-based bus numbers (the result-file convention).
  static PlacementGenome from_bus_numbers(int n, std::span<const int> numbers);
  /// Sorted 1-based bus numbers of the placed sensors.
  std::vector<int> bus_numbers() const;

  int size() const noexcept { return static_cast<int>(bits_.size()); }
  bool operator[](int i) const { return bits_[static_cast<std::size_t>(i)] != 0; }
  void set(int i, bool on) { bits_.at(static_cast<std::size_t>(i)) = on ? 1 : 0; }
  int popcount() const;
  std::span<const std::uint8_t> bits() const noexcept { return bits_; }
  std::string key() const;  // '0'/'1' string, usable as a map key

  bool operator==(const PlacementGenome&) const = default;
  auto operator<=>(const PlacementGenome&) const = default;

 private:
  std::vector<std::uint8_t> bits_;
};

int hamming(const PlacementGenome& a, const PlacementGenome& b);

struct ConstraintConfig {
  int radius = 1;          // r
  int min_redundancy = 2;  // R_min
  double w_connectivity = 1.0;
  double w_coverage = 1.0;
  double w_redundancy = 1.0;

  void validate() const;
};

struct ConstraintReport {
  double p_connectivity = 0.0;
  double p_coverage = 0.0;
  double p_redundancy = 0.0;
  double w_connectivity = 1.0, w_coverage = 1.0, w_redundancy = 1.0;
  double total = 0.0;  // V
};

/// 0 when the subgraph induced on sensor buses is connected, else 1. An empty
/// genome is penalized.
double check_connectivity(const PowerNetwork& net, const PlacementGenome& genome);

/// (1/N_c) sum_j alpha_j (1 - coverage(j)), coverage(j) = any sensor within
/// r hops (BFS).
double coverage_penalty(const PowerNetwork& net, const PlacementGenome& genome, int radius,
                        std::span<const double> node_weights);

/// (1/N_c) sum_j max(R_min - u_j, 0) with u_j the sensors within r hops.
double redundancy_penalty(const PowerNetwork& net, const PlacementGenome& genome, int radius,
                          int min_redundancy);

ConstraintReport total_violation(const PowerNetwork& net, const PlacementGenome& genome,
                                 const ConstraintConfig& config, std::span<const double> node_weights);

/// Precomputed r-hop neighborhoods for repeated evaluation inside the GA.
class PlacementProblem {
 public:
  PlacementProblem(const PowerNetwork& net, ConstraintConfig config, Vector node_weights);

  const PowerNetwork& network() const noexcept { return *net_; }
  const ConstraintConfig& config() const noexcept { return config_; }
  const Vector& node_weights() const noexcept { return weights_; }
  const std::vector<std::vector<int>>& neighborhoods() const noexcept { return hood_; }

  ConstraintReport evaluate(const PlacementGenome& genome) const;
  double coverage(const PlacementGenome& genome) const;
  double redundancy(const PlacementGenome& genome) const;

 private:
  const PowerNetwork* net_;
  ConstraintConfig config_;
  Vector weights_;
  std::vector<std::vector<int>> hood_;
};

}  // namespace gridsense
