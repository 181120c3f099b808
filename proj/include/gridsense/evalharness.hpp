#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridsense/attacks.hpp"
#include "gridsense/detector.hpp"
#include "gridsense/importance.hpp"
#include "gridsense/netmodel.hpp"
#include "gridsense/placement.hpp"
#include "gridsense/powerflow.hpp"

namespace gridsense {

/// Attack draws for dataset construction: each attacked frame picks its
/// magnitude and target fraction uniformly from these lists.
struct ScenarioConfig {
  std::vector<double> alphas = {0.05, 0.1, 0.2};
  std::vector<double> target_fractions = {0.1, 0.2, 0.3, 0.5};
  double tau_max = 0.2;
  std::array<bool, kChannels> channels = {false, false, false, false, true, true};

  void validate() const;
};

struct SplitConfig {
  double test_fraction = 0.2;  // share of timestamps held out for the LR test set
  double train_ratio = 0.7;    // train share of the remaining labeled frames
  ScenarioConfig scenarios;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Train/val hold each pooled timestamp's benign frame plus one random or
/// general attack on it; test holds benign frames plus LR attacks on unseen
/// timestamps. Splits are by timestamp.
struct Splits {
  std::vector<MeasurementFrame> train, val, test;
  std::vector<int> train_t, val_t, test_t;  // timestamps, sorted
  int lr_failures = 0;                      // LR attacks whose re-solve diverged
};

Splits make_splits(const PowerNetwork& net, std::span<const MeasurementFrame> benign, const SplitConfig& config,
                   const PowerFlowOptions& pf = {});

/// Top-K buses by importance, ties broken by a seeded shuffle.
PlacementGenome greedy_placement(const PowerNetwork& net, const Vector& scores, int k, std::uint64_t seed = 1);

/// M copies of `genome`, each with k placed sensors removed uniformly at
/// random. Baseline metering is not part of the genome and is never removed.
std::vector<PlacementGenome> simulate_failures(const PlacementGenome& genome, int k, int trials,
                                               std::uint64_t seed);

/// 0..min(floor(0.3 N), placed), thinned to at most `max_levels` evenly
/// spaced values that keep both ends.
std::vector<int> failure_levels(int n_buses, int placed, int max_levels = 8, double max_fraction = 0.3);

struct LevelMetrics {
  int failures = 0;
  double acc = 0.0, tpr = 0.0, fpr = 0.0, prec = 0.0, f1 = 0.0;
};

struct RobustnessReport {
  std::vector<LevelMetrics> levels;
  double mean_degradation = 0.0;  // mean (ACC_0 - ACC_k) / ACC_0 over k > 0, floored at 0
  double r = 1.0;                 // 1 / (1 + mean_degradation)
  double a_f1 = 0.0;              // trapezoidal area of F1 over k / k_max
  int f_crit = 0;                 // first k with F1 < 0.9 F1_0, else the largest level
  double mean_acc = 0.0, mean_f1 = 0.0, mean_prec = 0.0;
};

/// Summary metrics from a per-level trace; levels[0] must be the 0-failure row.
RobustnessReport robustness_from_trace(std::vector<LevelMetrics> levels);

struct RobustnessConfig {
  std::vector<int> levels;  // empty: failure_levels(N, popcount, max_levels, max_fraction)
  int max_levels = 8;
  double max_fraction = 0.3;
  int trials = 30;
  std::uint64_t seed = 1;
  double threshold = 0.5;
  Exec exec = Exec::parallel;
};

/// Fixed-model stress test: no retraining under failures.
RobustnessReport robustness_report(const PowerNetwork& net, const DetectorModel& model, const PlacementGenome& genome,
                                   std::span<const MeasurementFrame> test, const RobustnessConfig& config);

struct PlacementMethod {
  std::string name;
  PlacementGenome genome;
};

struct ComparisonRow {
  std::string method;
  PlacementGenome genome;
  DetectionMetrics metrics;
  DetectionMetrics improvement;  // metric minus the baseline-layout metric
  RobustnessReport robustness;
  double val_loss = 0.0;
};

/// Trains one detector per method (shared seed) plus the baseline-only
/// layout, evaluates on the test split and stress-tests each placement.
std::vector<ComparisonRow> compare_placements(const PowerNetwork& net, std::span<const PlacementMethod> methods,
                                              const Splits& splits, const TrainConfig& train_config,
                                              const RobustnessConfig& robustness);

void write_metrics_csv(std::ostream& out, std::span<const ComparisonRow> rows);
void write_robustness_csv(std::ostream& out, std::span<const ComparisonRow> rows);
nlohmann::ordered_json comparison_json(std::span<const ComparisonRow> rows);

inline constexpr std::string_view kMetricsHeader =
    "method,sensors,buses,acc,tpr,fpr,prec,f1,d_acc,d_tpr,d_fpr,d_prec,d_f1,val_loss";
inline constexpr std::string_view kRobustnessHeader = "method,f_crit,r,a_f1,mean_acc,mean_f1,mean_prec";

}  // namespace gridsense
