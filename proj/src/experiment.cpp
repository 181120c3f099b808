#include "gridsense/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <set>

namespace gridsense {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

void check_keys(const json& j, std::initializer_list<std::string_view> keys, std::string_view section) {
  if (!j.is_object()) throw ConfigError(std::string(section) + " must be an object");
  for (const auto& [k, v] : j.items())
    if (std::find(keys.begin(), keys.end(), k) == keys.end())
      throw ConfigError("unknown key '" + k + "' in " + std::string(section));
}

template <typename T>
void get(const json& j, const char* key, T& out) {
  if (const auto it = j.find(key); it != j.end()) out = it->get<T>();
}

const json& section(const json& j, const char* key) {
  static const json empty = json::object();
  const auto it = j.find(key);
  return it == j.end() ? empty : *it;
}

std::array<bool, kChannels> parse_channels(const std::vector<std::string>& names) {
  std::array<bool, kChannels> out{};
  for (const auto& n : names) {
    const auto it = std::find(kChannelNames.begin(), kChannelNames.end(), n);
    if (it == kChannelNames.end()) throw ConfigError("unknown channel '" + n + "'");
    out[static_cast<std::size_t>(it - kChannelNames.begin())] = true;
  }
  return out;
}

std::vector<std::string> channel_names(const std::array<bool, kChannels>& on) {
  std::vector<std::string> out;
  for (int c = 0; c < kChannels; ++c)
    if (on[c]) out.emplace_back(kChannelNames[c]);
  return out;
}

}  // namespace

void ExperimentConfig::resolve() {
  if (case_name.empty()) throw ConfigError("case is required");
  if (workers < 0) throw ConfigError("workers must be non-negative");
  profile.seed = derive_seed(seed, 1);
  splits.seed = derive_seed(seed, 2);
  ga.seed = derive_seed(seed, 3);
  detector.seed = derive_seed(seed, 4);
  if (profile.length < 3) throw ConfigError("profile length must be at least 3");
  if (!(profile.low > 0.0 && profile.low <= profile.high)) throw ConfigError("profile bounds must satisfy 0 < low <= high");
  if (profile.period < 1 || profile.noise < 0.0) throw ConfigError("invalid profile period or noise");
  splits.validate();
  constraints.validate();
  importance.validate();
  detector.train_ratio = splits.train_ratio;
  detector.validate();
  if (evaluation.trials < 1 || evaluation.max_levels < 1) throw ConfigError("evaluation needs trials and levels >= 1");
  if (!(evaluation.max_fraction >= 0.0 && evaluation.max_fraction <= 1.0))
    throw ConfigError("failure fraction must lie in [0, 1]");
  if (!(psse.variance > 0.0 && psse.pseudo_factor > 0.0 && psse.noise_sigma >= 0.0 && psse.frames > 0))
    throw ConfigError("invalid state-estimation settings");
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  try {
    check_keys(j, {"case", "seed", "workers", "output_dir", "profile", "splits", "attacks", "constraints", "importance",
                   "ga", "detector", "evaluation", "psse"},
               "config");
    get(j, "case", c.case_name);
    get(j, "seed", c.seed);
    get(j, "workers", c.workers);
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();

    const auto& p = section(j, "profile");
    check_keys(p, {"length", "low", "high", "daily_amplitude", "period", "noise"}, "profile");
    get(p, "length", c.profile.length);
    get(p, "low", c.profile.low);
    get(p, "high", c.profile.high);
    get(p, "daily_amplitude", c.profile.daily_amplitude);
    get(p, "period", c.profile.period);
    get(p, "noise", c.profile.noise);

    const auto& s = section(j, "splits");
    check_keys(s, {"test_fraction", "train_ratio"}, "splits");
    get(s, "test_fraction", c.splits.test_fraction);
    get(s, "train_ratio", c.splits.train_ratio);

    const auto& a = section(j, "attacks");
    check_keys(a, {"alphas", "target_fractions", "tau_max", "channels"}, "attacks");
    get(a, "alphas", c.splits.scenarios.alphas);
    get(a, "target_fractions", c.splits.scenarios.target_fractions);
    get(a, "tau_max", c.splits.scenarios.tau_max);
    if (a.contains("channels")) c.splits.scenarios.channels = parse_channels(a.at("channels").get<std::vector<std::string>>());

    const auto& k = section(j, "constraints");
    check_keys(k, {"radius", "min_redundancy", "w_connectivity", "w_coverage", "w_redundancy"}, "constraints");
    get(k, "radius", c.constraints.radius);
    get(k, "min_redundancy", c.constraints.min_redundancy);
    get(k, "w_connectivity", c.constraints.w_connectivity);
    get(k, "w_coverage", c.constraints.w_coverage);
    get(k, "w_redundancy", c.constraints.w_redundancy);

    const auto& w = section(j, "importance");
    check_keys(w, {"bc", "eic", "ebc", "ecd"}, "importance");
    get(w, "bc", c.importance.bc);
    get(w, "eic", c.importance.eic);
    get(w, "ebc", c.importance.ebc);
    get(w, "ecd", c.importance.ecd);

    const auto& g = section(j, "ga");
    check_keys(g, {"n_pop", "generations", "max_sensors", "h_frac", "d_frac", "d_min", "indpb", "b_f", "crossover_prob"},
               "ga");
    c.ga.max_sensors = 0;
    get(g, "n_pop", c.ga.n_pop);
    get(g, "generations", c.ga.generations);
    get(g, "max_sensors", c.ga.max_sensors);
    get(g, "h_frac", c.ga.h_frac);
    get(g, "d_frac", c.ga.d_frac);
    get(g, "d_min", c.ga.d_min);
    get(g, "indpb", c.ga.indpb);
    get(g, "b_f", c.ga.b_f);
    get(g, "crossover_prob", c.ga.crossover_prob);

    const auto& d = section(j, "detector");
    check_keys(d, {"epochs", "batch_size", "learning_rate", "lambda_data", "lambda_phy", "rec_weight", "layers", "hidden",
                   "reactive"},
               "detector");
    get(d, "epochs", c.detector.epochs);
    get(d, "batch_size", c.detector.batch_size);
    get(d, "learning_rate", c.detector.learning_rate);
    get(d, "lambda_data", c.detector.lambda_data);
    get(d, "lambda_phy", c.detector.lambda_phy);
    get(d, "rec_weight", c.detector.rec_weight);
    get(d, "layers", c.detector.layers);
    get(d, "hidden", c.detector.hidden);
    if (d.contains("reactive")) {
      const auto mode = d.at("reactive").get<std::string>();
      if (mode == "sine") c.detector.reactive = ReactiveMode::sine;
      else if (mode == "cosine") c.detector.reactive = ReactiveMode::cosine;
      else throw ConfigError("detector.reactive must be 'sine' or 'cosine'");
    }

    const auto& e = section(j, "evaluation");
    check_keys(e, {"trials", "max_levels", "max_fraction", "threshold"}, "evaluation");
    get(e, "trials", c.evaluation.trials);
    get(e, "max_levels", c.evaluation.max_levels);
    get(e, "max_fraction", c.evaluation.max_fraction);
    get(e, "threshold", c.evaluation.threshold);

    const auto& ps = section(j, "psse");
    check_keys(ps, {"variance", "pseudo_factor", "noise_sigma", "frames"}, "psse");
    get(ps, "variance", c.psse.variance);
    get(ps, "pseudo_factor", c.psse.pseudo_factor);
    get(ps, "noise_sigma", c.psse.noise_sigma);
    get(ps, "frames", c.psse.frames);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  return c;
}

ojson config_to_json(const ExperimentConfig& c) {
  ojson j;
  j["case"] = c.case_name;
  j["seed"] = c.seed;
  j["workers"] = c.workers;
  j["output_dir"] = c.output_dir.string();
  j["profile"] = {{"length", c.profile.length}, {"low", c.profile.low}, {"high", c.profile.high},
                  {"daily_amplitude", c.profile.daily_amplitude}, {"period", c.profile.period},
                  {"noise", c.profile.noise}};
  j["splits"] = {{"test_fraction", c.splits.test_fraction}, {"train_ratio", c.splits.train_ratio}};
  j["attacks"] = {{"alphas", c.splits.scenarios.alphas},
                  {"target_fractions", c.splits.scenarios.target_fractions},
                  {"tau_max", c.splits.scenarios.tau_max},
                  {"channels", channel_names(c.splits.scenarios.channels)}};
  j["constraints"] = {{"radius", c.constraints.radius}, {"min_redundancy", c.constraints.min_redundancy},
                      {"w_connectivity", c.constraints.w_connectivity}, {"w_coverage", c.constraints.w_coverage},
                      {"w_redundancy", c.constraints.w_redundancy}};
  j["importance"] = {{"bc", c.importance.bc}, {"eic", c.importance.eic}, {"ebc", c.importance.ebc},
                     {"ecd", c.importance.ecd}};
  j["ga"] = {{"n_pop", c.ga.n_pop}, {"generations", c.ga.generations}, {"max_sensors", c.ga.max_sensors},
             {"h_frac", c.ga.h_frac}, {"d_frac", c.ga.d_frac}, {"d_min", c.ga.d_min}, {"indpb", c.ga.indpb},
             {"b_f", c.ga.b_f}, {"crossover_prob", c.ga.crossover_prob}};
  j["detector"] = {{"epochs", c.detector.epochs}, {"batch_size", c.detector.batch_size},
                   {"learning_rate", c.detector.learning_rate}, {"lambda_data", c.detector.lambda_data},
                   {"lambda_phy", c.detector.lambda_phy}, {"rec_weight", c.detector.rec_weight},
                   {"layers", c.detector.layers}, {"hidden", c.detector.hidden},
                   {"reactive", c.detector.reactive == ReactiveMode::sine ? "sine" : "cosine"}};
  j["evaluation"] = {{"trials", c.evaluation.trials}, {"max_levels", c.evaluation.max_levels},
                     {"max_fraction", c.evaluation.max_fraction}, {"threshold", c.evaluation.threshold}};
  j["psse"] = {{"variance", c.psse.variance}, {"pseudo_factor", c.psse.pseudo_factor},
               {"noise_sigma", c.psse.noise_sigma}, {"frames", c.psse.frames}};
  return j;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

PowerNetwork load_network(const std::string& name_or_path) {
  return parse_case(bundled_case_path(name_or_path));
}

PipelineData prepare_pipeline(const ExperimentConfig& config) {
  auto net = load_network(config.case_name);
  solve_powerflow(net, base_operating_point(net));
  auto profile = make_load_profile(net, config.profile);
  auto dataset = generate_dataset(net, profile);
  if (dataset.frames.size() < 3) throw DivergenceError("too few converged timestamps for a dataset", 0.0);
  auto splits = make_splits(net, dataset.frames, config.splits);
  auto scores = importance_scores(net, config.importance);
  return PipelineData{std::move(net), std::move(dataset), std::move(splits), std::move(scores)};
}

OptimizeOutcome run_optimize(const ExperimentConfig& config, const PipelineData& data, const EvolveOptions& options) {
  const auto& net = data.net;
  GaConfig ga = config.ga;
  if (ga.max_sensors <= 0) ga.max_sensors = std::max(1, static_cast<int>(std::lround(0.3 * net.size())));
  PlacementProblem problem(net, config.constraints, data.scores.score);
  DetectorFitness f2(net, data.splits.train, data.splits.val, config.detector);
  Evaluator evaluator = [&](const PlacementGenome& g) {
    return Fitness{problem.evaluate(g).total, g.popcount(), f2(g), false};
  };
  OptimizeOutcome out;
  out.evolve = evolve(net, data.scores.score, evaluator, ga, options);
  out.greedy = greedy_placement(net, data.scores.score, ga.max_sensors, ga.seed);
  out.trainings = f2.trainings();
  return out;
}

ojson fitness_json(const Fitness& f) {
  ojson j;
  j["violation"] = f.violation;
  j["sensors"] = f.sensors;
  j["detection_cost"] = f.detection_cost;
  if (f.failed) j["failed"] = true;
  return j;
}

ojson generation_json(const GenerationLog& log) {
  ojson j;
  j["generation"] = log.generation;
  j["champion"] = fitness_json(log.champion);
  j["front_sizes"] = log.front_sizes;
  j["evaluations"] = log.evaluations;
  j["failures"] = log.failures;
  return j;
}

ojson pareto_json(const EvolveResult& result) {
  std::vector<const Individual*> front;
  for (int i : result.pareto) front.push_back(&result.population[i]);
  std::sort(front.begin(), front.end(), [](const Individual* a, const Individual* b) {
    if (a->fitness.sensors != b->fitness.sensors) return a->fitness.sensors < b->fitness.sensors;
    if (a->fitness.detection_cost != b->fitness.detection_cost) return a->fitness.detection_cost < b->fitness.detection_cost;
    return a->genome.key() < b->genome.key();
  });
  ojson members = ojson::array();
  std::set<std::string> seen;
  for (const auto* ind : front) {
    if (!seen.insert(ind->genome.key()).second) continue;
    ojson m;
    m["buses"] = ind->genome.bus_numbers();
    m["fitness"] = fitness_json(ind->fitness);
    members.push_back(std::move(m));
  }
  ojson j;
  j["front"] = std::move(members);
  j["champion"] = {{"buses", result.champion.genome.bus_numbers()}, {"fitness", fitness_json(result.champion.fitness)}};
  return j;
}

}  // namespace gridsense
