#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <tuple>
#include <vector>

#include "gridsense/importance.hpp"
#include "gridsense/netmodel.hpp"
#include "gridsense/placement.hpp"

namespace gridsense {

/// Objective triple (V, f1, f2). `failed` marks evaluator errors, which carry
/// the worst possible values.
struct Fitness {
  double violation = 0.0;
  int sensors = 0;
  double detection_cost = 0.0;
  bool failed = false;

  bool feasible() const noexcept { return violation == 0.0; }
  static Fitness worst(int sensors) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    return Fitness{inf, sensors, inf, true};
  }
  bool operator==(const Fitness&) const = default;
};

struct Individual {
  PlacementGenome genome;
  Fitness fitness;
  int rank = 0;  // 1 = first front
  double crowding = 0.0;
};

struct GaConfig {
  int n_pop = 20;
  int generations = 40;
  int max_sensors = 4;  // K
  int radius = 1;       // r, for greedy-cover seeding
  double h_frac = 0.2;
  double d_frac = 0.3;
  double d_min = 0.2;
  double indpb = 0.1;
  double b_f = 0.8;
  double crossover_prob = 0.9;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Deb constraint domination: feasible beats infeasible; among infeasible the
/// smaller V wins (equal V falls through); otherwise Pareto on (f1, f2).
bool constrained_dominates(const Fitness& a, const Fitness& b);

/// Lexicographic champion key (I(V > 0), V, f1 + f2).
std::tuple<int, double, double> champion_key(const Fitness& f);

struct InitialPopulation {
  std::vector<PlacementGenome> genomes;
  int top_k = 0;       // importance-seeded members
  int greedy = 0;      // greedy-cover members
  int diverse = 0;     // Hamming-gated random members
  int random = 0;      // unconstrained random fill
  int duplicates = 0;  // fill-ins after uniqueness retries ran out
};

/// Hybrid initialization: top-K by importance, greedy r-hop cover, Hamming-
/// gated random, then random fill. `eligible` masks candidate buses.
InitialPopulation init_population(const PowerNetwork& net, const Vector& scores,
                                  std::span<const std::uint8_t> eligible, const GaConfig& config, Rng& rng);

/// Adds the eligible node covering the most uncovered nodes within r hops
/// (ties: higher score, then lower index) until K sensors or full cover.
PlacementGenome greedy_cover(const PowerNetwork& net, std::span<const std::uint8_t> eligible, int max_sensors,
                             int radius, const Vector& scores);

/// Per bit, with prob indpb: with prob b_F set the bit to 1 with prob S_I[i]
/// (else 0), otherwise flip it.
PlacementGenome biased_mutation(const PlacementGenome& genome, const Vector& scores, double indpb, double b_f,
                                Rng& rng);

/// Fast non-dominated sort under constrained_dominates. Sets `rank` and
/// returns the fronts as index lists.
std::vector<std::vector<int>> nondominated_sort(std::vector<Individual>& population);

/// Sorted-neighbor gap sums on (f1, f2) for feasible fronts and on V for
/// infeasible ones; boundary members get +inf.
void crowding_distance(std::vector<Individual>& population, std::span<const int> front);

/// Index of the champion among `candidates` (ties: smaller genome key).
int select_champion(const std::vector<Individual>& population, std::span<const int> candidates);

using Evaluator = std::function<Fitness(const PlacementGenome&)>;

struct GenerationLog {
  int generation = 0;
  Fitness champion;
  std::vector<int> front_sizes;
  int evaluations = 0;  // distinct genomes evaluated so far
  int failures = 0;
};

struct EvolveOptions {
  Exec exec = Exec::parallel;
  std::vector<std::uint8_t> eligible;  // empty: all buses
  std::function<void(const GenerationLog&)> on_generation;
  std::function<void(const PlacementGenome&, const std::string&)> on_failure;
};

struct EvolveResult {
  std::vector<Individual> population;  // final, sorted
  std::vector<int> pareto;             // indices of rank-1 members
  Individual champion;
  std::vector<GenerationLog> history;
  int evaluations = 0;
};

/// (mu + lambda) NSGA-II: binary tournament on (rank, crowding), uniform
/// crossover, biased mutation, joint sort and truncation. Fitness is memoized
/// by genome; the evaluator must be safe to call concurrently.
EvolveResult evolve(const PowerNetwork& net, const Vector& scores, const Evaluator& evaluator,
                    const GaConfig& config, const EvolveOptions& options = {});

}  // namespace gridsense
