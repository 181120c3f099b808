#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gridsense/attacks.hpp"
#include "gridsense/experiment.hpp"

namespace fs = std::filesystem;
using namespace gridsense;
using ojson = nlohmann::ordered_json;

namespace {

enum Exit { ok = 0, config_error = 2, convergence_error = 3, evaluator_error = 4, missing_artifact = 5 };

struct MissingArtifact : Error {
  using Error::Error;
};

struct EvaluatorFailure : Error {
  using Error::Error;
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const ojson& j) { write_text(path, j.dump(2) + "\n"); }

/// Reads {"buses": [...]}, {"champion": {"buses": [...]}} or a bare list of
/// 1-based bus numbers.
PlacementMethod read_placement(const fs::path& path, int n_buses, const std::string& fallback_name) {
  if (!fs::exists(path)) throw MissingArtifact("placement file not found: " + path.string());
  std::ifstream in(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("placement " + path.string() + " is not valid JSON: " + e.what());
  }
  std::string name = fallback_name;
  const nlohmann::json* node = &j;
  if (j.is_object() && j.contains("champion")) {
    node = &j.at("champion");
    if (fallback_name.empty()) name = "ga";
  }
  if (node->is_object()) {
    if (node->contains("name")) name = node->at("name").get<std::string>();
    if (!node->contains("buses")) throw ConfigError("placement " + path.string() + " has no 'buses' list");
    node = &node->at("buses");
  }
  if (name.empty()) name = path.stem().string();
  const auto buses = node->get<std::vector<int>>();
  return PlacementMethod{name, PlacementGenome::from_bus_numbers(n_buses, buses)};
}

ExperimentConfig base_config(const std::string& config_path) {
  return config_path.empty() ? ExperimentConfig{} : load_config(config_path);
}

void apply_workers(const ExperimentConfig& config) {
  if (config.workers > 0) set_worker_count(config.workers);
}

struct Common {
  std::string config;
  std::string case_name;
  std::uint64_t seed = 1;
  int workers = 0;
  std::string out;
};

void add_common(CLI::App* app, Common& c, bool case_positional) {
  app->add_option("--config", c.config, "Experiment config (JSON); flags override its values")->check(CLI::ExistingFile);
  if (case_positional)
    app->add_option("case", c.case_name, "Bundled case name (e.g. case14) or path to a case file")->required();
  else
    app->add_option("--case", c.case_name, "Bundled case name or path to a case file");
  app->add_option("--seed", c.seed, "Master seed");
  app->add_option("--workers", c.workers, "Worker cap for parallel kernels (default: all cores)")->check(CLI::NonNegativeNumber);
}

ExperimentConfig resolve_config(CLI::App* app, const Common& c) {
  auto cfg = base_config(c.config);
  if (!c.case_name.empty()) cfg.case_name = c.case_name;
  if (app->count("--seed")) cfg.seed = c.seed;
  if (app->count("--workers")) cfg.workers = c.workers;
  cfg.resolve();
  apply_workers(cfg);
  return cfg;
}

int cmd_simulate(CLI::App* app, const Common& c, int length) {
  auto cfg = base_config(c.config);
  if (!c.case_name.empty()) cfg.case_name = c.case_name;
  if (app->count("--seed")) cfg.seed = c.seed;
  if (app->count("--workers")) cfg.workers = c.workers;
  if (app->count("--length")) cfg.profile.length = length;
  cfg.resolve();
  apply_workers(cfg);
  const auto net = load_network(cfg.case_name);
  solve_powerflow(net, base_operating_point(net));
  const auto data = generate_dataset(net, make_load_profile(net, cfg.profile));
  if (data.frames.empty()) throw DivergenceError("no timestamp converged", 0.0);
  for (int t : data.skipped) std::cerr << "warning: power flow diverged at t=" << t << ", frame skipped\n";
  save_frames(c.out, data.frames);
  std::cerr << "wrote " << data.frames.size() << " frames to " << c.out << '\n';
  return ok;
}

int cmd_attack(const Common& c, const std::string& frames_path, const std::string& kind, double alpha,
               double fraction, double tau_max) {
  if (!fs::exists(frames_path)) throw MissingArtifact("frames file not found: " + frames_path);
  const auto net = load_network(c.case_name);
  const auto frames = load_frames(frames_path);
  AttackConfig base;
  base.alpha = alpha;
  base.target_fraction = fraction;
  base.tau_max = tau_max;
  if (kind == "random") base.kind = AttackKind::random;
  else if (kind == "general") base.kind = AttackKind::general;
  else if (kind == "lr") base.kind = AttackKind::lr;
  else throw ConfigError("attack kind must be random, general or lr");
  base.validate();
  std::vector<MeasurementFrame> benign;
  for (const auto& f : frames)
    if (f.label == Label::benign) benign.push_back(f);
  const FrameMatrix range = base.kind == AttackKind::general ? channel_range(benign) : FrameMatrix{};
  std::vector<MeasurementFrame> out;
  for (const auto& f : frames) {
    AttackConfig cfg = base;
    cfg.seed = derive_seed(c.seed, static_cast<std::uint64_t>(f.t));
    switch (base.kind) {
      case AttackKind::random: out.push_back(attack_random(f, cfg)); break;
      case AttackKind::general: out.push_back(attack_general(f, range, cfg)); break;
      case AttackKind::lr:
        try {
          out.push_back(attack_lr(net, f, cfg).frame);
        } catch (const DivergenceError&) {
          std::cerr << "warning: LR re-solve diverged at t=" << f.t << ", frame skipped\n";
        }
        break;
    }
  }
  save_frames(c.out, out);
  std::cerr << "wrote " << out.size() << " attacked frames to " << c.out << '\n';
  return ok;
}

int cmd_importance(CLI::App* app, const Common& c) {
  const auto cfg = resolve_config(app, c);
  const auto net = load_network(cfg.case_name);
  const auto s = importance_scores(net, cfg.importance);
  ojson buses = ojson::array();
  for (int i = 0; i < net.size(); ++i) {
    buses.push_back({{"bus", i + 1},
                     {"external_id", net.bus(i).external_id},
                     {"score", s.score(i)},
                     {"betweenness", s.betweenness_n(i)},
                     {"eigenvector", s.eigenvector_n(i)},
                     {"electrical_betweenness", s.electrical_betweenness_n(i)},
                     {"coupling_degree", s.coupling_degree_n(i)}});
  }
  ojson j;
  j["case"] = net.name();
  j["weights"] = {{"bc", cfg.importance.bc}, {"eic", cfg.importance.eic}, {"ebc", cfg.importance.ebc},
                  {"ecd", cfg.importance.ecd}};
  j["buses"] = std::move(buses);
  if (c.out.empty())
    std::cout << j.dump(2) << '\n';
  else
    write_json(c.out, j);
  return ok;
}

struct OptimizeFlags {
  int pop = 0, generations = -1, epochs = 0, max_sensors = 0;
  bool verbatim_lq = false;
};

ExperimentConfig optimize_config(CLI::App* app, const Common& c, const OptimizeFlags& f) {
  auto cfg = base_config(c.config);
  if (!c.case_name.empty()) cfg.case_name = c.case_name;
  if (app->count("--seed")) cfg.seed = c.seed;
  if (app->count("--workers")) cfg.workers = c.workers;
  if (!c.out.empty()) cfg.output_dir = c.out;
  if (app->count("--pop")) cfg.ga.n_pop = f.pop;
  if (app->count("--generations")) cfg.ga.generations = f.generations;
  if (app->count("--max-sensors")) cfg.ga.max_sensors = f.max_sensors;
  if (app->count("--epochs")) cfg.detector.epochs = f.epochs;
  if (f.verbatim_lq) cfg.detector.reactive = ReactiveMode::cosine;
  cfg.resolve();
  apply_workers(cfg);
  return cfg;
}

int cmd_optimize(CLI::App* app, const Common& c, const OptimizeFlags& flags) {
  const auto cfg = optimize_config(app, c, flags);
  const auto data = prepare_pipeline(cfg);
  fs::create_directories(cfg.output_dir);
  std::ofstream log(cfg.output_dir / "log.jsonl", std::ios::binary);
  EvolveOptions options;
  options.on_generation = [&](const GenerationLog& g) {
    log << generation_json(g).dump() << '\n';
    log.flush();
    std::cerr << "generation " << g.generation << ": champion V=" << g.champion.violation
              << " f1=" << g.champion.sensors << " f2=" << g.champion.detection_cost << '\n';
  };
  options.on_failure = [&](const PlacementGenome& g, const std::string& what) {
    ojson j;
    j["event"] = "evaluator_failure";
    j["buses"] = g.bus_numbers();
    j["error"] = what;
    log << j.dump() << '\n';
    std::cerr << "warning: evaluation failed: " << what << '\n';
  };
  const auto outcome = run_optimize(cfg, data, options);
  const auto& champ = outcome.evolve.champion;

  ojson placements;
  placements["case"] = data.net.name();
  placements["seed"] = cfg.seed;
  placements["champion"] = {{"name", "ga"}, {"buses", champ.genome.bus_numbers()}, {"fitness", fitness_json(champ.fitness)}};
  placements["greedy"] = {{"name", "greedy"}, {"buses", outcome.greedy.bus_numbers()}};
  placements["evaluations"] = outcome.evolve.evaluations;
  placements["trainings"] = outcome.trainings;
  write_json(cfg.output_dir / "placements.json", placements);
  write_json(cfg.output_dir / "pareto.json", pareto_json(outcome.evolve));
  write_json(cfg.output_dir / "config.json", config_to_json(cfg));
  if (champ.fitness.failed) throw EvaluatorFailure("no genome could be evaluated");
  std::cout << "champion buses:";
  for (int b : champ.genome.bus_numbers()) std::cout << ' ' << b;
  std::cout << '\n';
  return ok;
}

int cmd_evaluate(CLI::App* app, const Common& c, const std::string& placement, const std::vector<std::string>& genomes,
                 bool skip_greedy, int trials) {
  auto cfg = base_config(c.config);
  if (!c.case_name.empty()) cfg.case_name = c.case_name;
  if (app->count("--seed")) cfg.seed = c.seed;
  if (app->count("--workers")) cfg.workers = c.workers;
  if (!c.out.empty()) cfg.output_dir = c.out;
  if (app->count("--trials")) cfg.evaluation.trials = trials;
  cfg.resolve();
  apply_workers(cfg);

  const auto net = load_network(cfg.case_name);
  std::vector<PlacementMethod> methods{{"baseline", PlacementGenome(net.size())}};
  if (!placement.empty()) methods.push_back(read_placement(placement, net.size(), ""));
  for (const auto& entry : genomes) {
    const auto eq = entry.find('=');
    const std::string name = eq == std::string::npos ? "" : entry.substr(0, eq);
    const std::string path = eq == std::string::npos ? entry : entry.substr(eq + 1);
    methods.push_back(read_placement(path, net.size(), name));
  }
  const auto data = prepare_pipeline(cfg);
  if (!skip_greedy) {
    int k = cfg.ga.max_sensors > 0 ? cfg.ga.max_sensors : std::max(1, static_cast<int>(std::lround(0.3 * net.size())));
    methods.push_back({"greedy", greedy_placement(net, data.scores.score, k, cfg.ga.seed)});
  }
  RobustnessConfig rc;
  rc.trials = cfg.evaluation.trials;
  rc.max_levels = cfg.evaluation.max_levels;
  rc.max_fraction = cfg.evaluation.max_fraction;
  rc.seed = derive_seed(cfg.seed, 5);
  rc.threshold = cfg.evaluation.threshold;
  const auto rows = compare_placements(net, methods, data.splits, cfg.detector, rc);
  fs::create_directories(cfg.output_dir);
  std::ostringstream metrics, robust;
  write_metrics_csv(metrics, rows);
  write_robustness_csv(robust, rows);
  write_text(cfg.output_dir / "metrics.csv", metrics.str());
  write_text(cfg.output_dir / "robustness.csv", robust.str());
  ojson j;
  j["case"] = net.name();
  j["seed"] = cfg.seed;
  j["metadata"] = {{"f_crit", "smallest failure count whose mean F1 falls below 0.9 of the no-failure F1; "
                              "the largest tested level when none does"},
                   {"retraining", "none: the detector trained on the intact layout is reused under failures"},
                   {"improvement", "metric minus the baseline-layout metric"},
                   {"test_set", "benign frames plus LR attacks on held-out timestamps"},
                   {"lr_failures", data.splits.lr_failures}};
  j["methods"] = comparison_json(rows);
  write_json(cfg.output_dir / "comparison.json", j);
  std::cout << metrics.str();
  return ok;
}

int cmd_psse(CLI::App* app, const Common& c, const std::string& placement, int frames, double sigma) {
  auto cfg = base_config(c.config);
  if (!c.case_name.empty()) cfg.case_name = c.case_name;
  if (app->count("--seed")) cfg.seed = c.seed;
  if (app->count("--workers")) cfg.workers = c.workers;
  if (app->count("--frames")) cfg.psse.frames = frames;
  if (app->count("--sigma")) cfg.psse.noise_sigma = sigma;
  cfg.resolve();
  apply_workers(cfg);
  const auto net = load_network(cfg.case_name);
  const auto method = read_placement(placement, net.size(), "placement");
  ProfileConfig profile = cfg.profile;
  profile.length = cfg.psse.frames;
  const auto data = generate_dataset(net, make_load_profile(net, profile));
  if (data.frames.empty()) throw DivergenceError("no timestamp converged", 0.0);
  PsseConfig pc;
  pc.measurement = {cfg.psse.variance, cfg.psse.pseudo_factor};
  pc.noise_sigma = cfg.psse.noise_sigma;
  pc.seed = derive_seed(cfg.seed, 6);
  const auto cmp = psse_improvement(net, data.frames, PlacementGenome(net.size()), method.genome, pc);
  std::ostringstream csv;
  csv << "t,vm_err_baseline,va_err_baseline,vm_err_placement,va_err_placement\n";
  for (std::size_t k = 0; k < cmp.a.size(); ++k)
    csv << cmp.a[k].t << ',' << fmt_double(cmp.a[k].vm) << ',' << fmt_double(cmp.a[k].va) << ','
        << fmt_double(cmp.b[k].vm) << ',' << fmt_double(cmp.b[k].va) << '\n';
  if (c.out.empty())
    std::cout << csv.str();
  else
    write_text(c.out, csv.str());
  std::cout << "mean Vm error: baseline " << cmp.mean_vm_a << ", placement " << cmp.mean_vm_b << " ("
            << cmp.improvement_vm << "% reduction)\n"
            << "mean Va error: baseline " << cmp.mean_va_a << ", placement " << cmp.mean_va_b << " ("
            << cmp.improvement_va << "% reduction)\n";
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sensor placement and physics-informed attack detection for power grids"};
  app.require_subcommand(1);

  Common sim;
  int length = 200;
  auto* simulate = app.add_subcommand("simulate", "Generate benign measurement frames from a load profile");
  add_common(simulate, sim, true);
  simulate->add_option("--length", length, "Number of timestamps")->check(CLI::PositiveNumber);
  simulate->add_option("--out", sim.out, "Output file (.csv or .jsonl)")->required();

  Common atk;
  std::string frames_in, kind = "random";
  double alpha = 0.1, fraction = 0.3, tau_max = 0.2;
  auto* attack = app.add_subcommand("attack", "Inject false-data attacks into a frame file");
  add_common(attack, atk, true);
  attack->add_option("--frames", frames_in, "Input frame file")->required();
  attack->add_option("--kind", kind, "random, general or lr");
  attack->add_option("--alpha", alpha, "Perturbation factor (random/general)");
  attack->add_option("--fraction", fraction, "Fraction of buses targeted");
  attack->add_option("--tau-max", tau_max, "Load-shift bound for LR attacks");
  attack->add_option("--out", atk.out, "Output file (.csv or .jsonl)")->required();

  Common imp;
  auto* importance = app.add_subcommand("importance", "Score buses by combined centrality");
  add_common(importance, imp, true);
  importance->add_option("--out", imp.out, "Output JSON (default: stdout)");

  Common opt;
  OptimizeFlags of;
  auto* optimize = app.add_subcommand("optimize", "Run the closed-loop NSGA-II placement search");
  add_common(optimize, opt, false);
  optimize->add_option("--out", opt.out, "Results directory");
  optimize->add_option("--pop", of.pop, "Population size")->check(CLI::PositiveNumber);
  optimize->add_option("--generations", of.generations, "Generation count")->check(CLI::NonNegativeNumber);
  optimize->add_option("--max-sensors", of.max_sensors, "K, the sensor budget for seeding")->check(CLI::PositiveNumber);
  optimize->add_option("--epochs", of.epochs, "Detector epochs per fitness evaluation")->check(CLI::PositiveNumber);
  optimize->add_flag("--paper-verbatim-lq", of.verbatim_lq, "Use cos(theta - delta) in the reactive residual");

  Common ev;
  std::string placement;
  std::vector<std::string> genomes;
  bool skip_greedy = false;
  int trials = 30;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Compare placements on the LR test set and under sensor failures");
  add_common(evaluate_cmd, ev, false);
  evaluate_cmd->add_option("--out", ev.out, "Results directory");
  evaluate_cmd->add_option("--placement", placement, "placements.json from optimize, or any genome JSON");
  evaluate_cmd->add_option("--genome", genomes, "Extra placement as NAME=PATH (repeatable)");
  evaluate_cmd->add_flag("--no-greedy", skip_greedy, "Skip the greedy top-K comparator");
  evaluate_cmd->add_option("--trials", trials, "Failure trials per level")->check(CLI::PositiveNumber);

  Common ps;
  std::string ps_placement;
  int ps_frames = 20;
  double sigma = 0.01;
  auto* psse = app.add_subcommand("psse", "Compare WLS state-estimation error with and without a placement");
  add_common(psse, ps, true);
  psse->add_option("--placement", ps_placement, "Placement JSON")->required();
  psse->add_option("--frames", ps_frames, "Number of frames")->check(CLI::PositiveNumber);
  psse->add_option("--sigma", sigma, "Measurement noise standard deviation")->check(CLI::NonNegativeNumber);
  psse->add_option("--out", ps.out, "Per-frame error CSV (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return config_error;
  }

  try {
    if (*simulate) return cmd_simulate(simulate, sim, length);
    if (*attack) return cmd_attack(atk, frames_in, kind, alpha, fraction, tau_max);
    if (*importance) return cmd_importance(importance, imp);
    if (*optimize) return cmd_optimize(optimize, opt, of);
    if (*evaluate_cmd) return cmd_evaluate(evaluate_cmd, ev, placement, genomes, skip_greedy, trials);
    if (*psse) return cmd_psse(psse, ps, ps_placement, ps_frames, sigma);
  } catch (const MissingArtifact& e) {
    std::cerr << "error: " << e.what() << '\n';
    return missing_artifact;
  } catch (const EvaluatorFailure& e) {
    std::cerr << "error: " << e.what() << '\n';
    return evaluator_error;
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return convergence_error;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return config_error;
  } catch (const ParseError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return config_error;
  } catch (const ValidationError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return config_error;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return ok;
}
