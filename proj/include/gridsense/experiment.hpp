#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridsense/detector.hpp"
#include "gridsense/evalharness.hpp"
#include "gridsense/importance.hpp"
#include "gridsense/nsga2.hpp"
#include "gridsense/placement.hpp"
#include "gridsense/powerflow.hpp"
#include "gridsense/stateest.hpp"

namespace gridsense {

struct EvaluationSettings {
  int trials = 30;
  int max_levels = 8;
  double max_fraction = 0.3;
  double threshold = 0.5;
};

struct PsseSettings {
  double variance = 1e-4;
  double pseudo_factor = 10.0;
  double noise_sigma = 0.01;
  int frames = 20;
};

/// Everything one run needs. Component seeds derive from `seed`; `ga.seed`,
/// `profile.seed` and friends are overwritten by resolve().
struct ExperimentConfig {
  std::string case_name = "case14";  // bundled name or path to a case file
  std::uint64_t seed = 1;
  int workers = 0;  // 0: GRIDSENSE_WORKERS or all cores
  std::filesystem::path output_dir = "results";
  ProfileConfig profile;
  SplitConfig splits;
  ConstraintConfig constraints;
  ImportanceWeights importance;
  GaConfig ga = [] {
    GaConfig g;
    g.max_sensors = 0;  // <= 0 means round(0.3 N)
    return g;
  }();
  TrainConfig detector;
  EvaluationSettings evaluation;
  PsseSettings psse;

  /// Derives component seeds and checks every section. Throws ConfigError.
  void resolve();
};

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::ordered_json config_to_json(const ExperimentConfig& config);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Bundled case name ("case14") or a filesystem path.
PowerNetwork load_network(const std::string& name_or_path);

/// Network, benign data, splits and importance scores for one config.
struct PipelineData {
  PowerNetwork net;
  Dataset dataset;
  Splits splits;
  ImportanceScores scores;
};

PipelineData prepare_pipeline(const ExperimentConfig& config);

struct OptimizeOutcome {
  EvolveResult evolve;
  PlacementGenome greedy;
  int trainings = 0;
};

/// Closed loop: V from the placement constraints, f1 = sensor count,
/// f2 = validation loss of a detector trained on the genome's layout.
OptimizeOutcome run_optimize(const ExperimentConfig& config, const PipelineData& data,
                             const EvolveOptions& options = {});

nlohmann::ordered_json fitness_json(const Fitness& f);
nlohmann::ordered_json generation_json(const GenerationLog& log);
/// Front members sorted by (f1, f2, genome) so output order is stable.
nlohmann::ordered_json pareto_json(const EvolveResult& result);

}  // namespace gridsense
