#include "gridsense/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>

namespace gridsense {

namespace {

template <typename T>
const T& pick(const std::vector<T>& values, Rng& rng) {
  return values[static_cast<std::size_t>(uniform01(rng) * static_cast<double>(values.size()))];
}

AttackConfig scenario_attack(const ScenarioConfig& sc, AttackKind kind, Rng& rng, std::uint64_t seed) {
  AttackConfig cfg;
  cfg.kind = kind;
  cfg.alpha = pick(sc.alphas, rng);
  cfg.target_fraction = pick(sc.target_fractions, rng);
  cfg.tau_max = sc.tau_max;
  cfg.channels = sc.channels;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

void ScenarioConfig::validate() const {
  if (alphas.empty() || target_fractions.empty()) throw ConfigError("attack scenario lists must be non-empty");
  for (double a : alphas)
    if (!(a > 0.0)) throw ConfigError("attack alpha must be positive");
  for (double f : target_fractions)
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("target fractions must lie in (0, 1]");
  if (!(tau_max > 0.0 && tau_max <= 1.0)) throw ConfigError("tau_max must lie in (0, 1]");
  if (std::none_of(channels.begin(), channels.end(), [](bool b) { return b; }))
    throw ConfigError("at least one attacked channel is required");
}

void SplitConfig::validate() const {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test fraction must lie in (0, 1)");
  if (!(train_ratio > 0.0 && train_ratio < 1.0)) throw ConfigError("train ratio must lie in (0, 1)");
  scenarios.validate();
}

Splits make_splits(const PowerNetwork& net, std::span<const MeasurementFrame> benign, const SplitConfig& config,
                   const PowerFlowOptions& pf) {
  config.validate();
  const int total = static_cast<int>(benign.size());
  if (total < 3) throw ValidationError("need at least 3 benign frames to split");
  std::vector<int> order(benign.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(config.seed, 0x73706c);
  std::shuffle(order.begin(), order.end(), rng);
  const int n_test = std::clamp(static_cast<int>(std::lround(config.test_fraction * total)), 1, total - 2);
  const int pool = total - n_test;
  const int n_train = std::clamp(static_cast<int>(std::lround(config.train_ratio * pool)), 1, pool - 1);

  auto sorted = [&](int from, int to) {
    std::vector<int> idx(order.begin() + from, order.begin() + to);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return benign[a].t < benign[b].t; });
    return idx;
  };
  const auto test_idx = sorted(0, n_test);
  const auto train_idx = sorted(n_test, n_test + n_train);
  const auto val_idx = sorted(n_test + n_train, total);

  std::vector<MeasurementFrame> history;
  for (int i : train_idx) history.push_back(benign[i]);
  for (int i : val_idx) history.push_back(benign[i]);
  const FrameMatrix range = channel_range(history);

  Splits s;
  auto fill_pool = [&](const std::vector<int>& idx, std::vector<MeasurementFrame>& out, std::vector<int>& ts) {
    for (int i : idx) {
      const auto& f = benign[i];
      const auto t = static_cast<std::uint64_t>(f.t);
      Rng draw = make_rng(config.seed, t, 0x706f6f);
      const bool general = uniform01(draw) < 0.5;
      const auto cfg = scenario_attack(config.scenarios, general ? AttackKind::general : AttackKind::random, draw,
                                       derive_seed(config.seed, t, general ? 2 : 1));
      out.push_back(f);
      out.push_back(general ? attack_general(f, range, cfg) : attack_random(f, cfg));
      ts.push_back(f.t);
    }
  };
  fill_pool(train_idx, s.train, s.train_t);
  fill_pool(val_idx, s.val, s.val_t);
  for (int i : test_idx) {
    const auto& f = benign[i];
    const auto t = static_cast<std::uint64_t>(f.t);
    Rng draw = make_rng(config.seed, t, 0x6c7274);
    const auto cfg = scenario_attack(config.scenarios, AttackKind::lr, draw, derive_seed(config.seed, t, 3));
    s.test.push_back(f);
    s.test_t.push_back(f.t);
    try {
      s.test.push_back(attack_lr(net, f, cfg, pf).frame);
    } catch (const DivergenceError&) {
      ++s.lr_failures;
    }
  }
  return s;
}

PlacementGenome greedy_placement(const PowerNetwork& net, const Vector& scores, int k, std::uint64_t seed) {
  const int n = net.size();
  if (k < 0 || k > n) throw ValidationError("K must lie in [0, N]");
  Rng rng = make_rng(seed, 0x677264);
  std::vector<std::pair<double, int>> keyed;
  for (int i = 0; i < n; ++i) keyed.emplace_back(uniform01(rng), i);
  std::sort(keyed.begin(), keyed.end(), [&](const auto& a, const auto& b) {
    if (scores(a.second) != scores(b.second)) return scores(a.second) > scores(b.second);
    return a.first < b.first;
  });
  PlacementGenome g(n);
  for (int i = 0; i < k; ++i) g.set(keyed[i].second, true);
  return g;
}

std::vector<PlacementGenome> simulate_failures(const PlacementGenome& genome, int k, int trials,
                                               std::uint64_t seed) {
  std::vector<int> placed;
  for (int i = 0; i < genome.size(); ++i)
    if (genome[i]) placed.push_back(i);
  if (k < 0 || k > static_cast<int>(placed.size())) throw ValidationError("failure count exceeds placed sensors");
  if (trials < 0) throw ValidationError("trial count must be non-negative");
  std::vector<PlacementGenome> out;
  for (int m = 0; m < trials; ++m) {
    Rng rng = make_rng(seed, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(m));
    auto pool = placed;
    std::shuffle(pool.begin(), pool.end(), rng);
    PlacementGenome g = genome;
    for (int i = 0; i < k; ++i) g.set(pool[i], false);
    out.push_back(std::move(g));
  }
  return out;
}

std::vector<int> failure_levels(int n_buses, int placed, int max_levels, double max_fraction) {
  const int k_max = std::min(static_cast<int>(std::floor(max_fraction * n_buses)), placed);
  std::vector<int> out;
  if (k_max + 1 <= max_levels || max_levels < 2) {
    for (int k = 0; k <= k_max; ++k) out.push_back(k);
    return out;
  }
  for (int i = 0; i < max_levels; ++i) {
    const int k = static_cast<int>(std::lround(static_cast<double>(i) * k_max / (max_levels - 1)));
    if (out.empty() || out.back() != k) out.push_back(k);
  }
  return out;
}

RobustnessReport robustness_from_trace(std::vector<LevelMetrics> levels) {
  if (levels.empty() || levels.front().failures != 0) throw ValidationError("trace must start at 0 failures");
  RobustnessReport r;
  r.levels = std::move(levels);
  const auto& base = r.levels.front();
  const std::size_t count = r.levels.size();
  if (count > 1 && base.acc > 0.0) {
    double sum = 0.0;
    for (std::size_t i = 1; i < count; ++i) sum += (base.acc - r.levels[i].acc) / base.acc;
    r.mean_degradation = std::max(0.0, sum / static_cast<double>(count - 1));
  }
  r.r = 1.0 / (1.0 + r.mean_degradation);

  const double k_max = r.levels.back().failures;
  if (k_max <= 0.0) {
    r.a_f1 = base.f1;
  } else {
    for (std::size_t i = 0; i + 1 < count; ++i) {
      const double dx = (r.levels[i + 1].failures - r.levels[i].failures) / k_max;
      r.a_f1 += dx * (r.levels[i].f1 + r.levels[i + 1].f1) / 2.0;
    }
  }

  r.f_crit = r.levels.back().failures;
  for (const auto& l : r.levels) {
    if (l.f1 < 0.9 * base.f1) {
      r.f_crit = l.failures;
      break;
    }
  }
  for (const auto& l : r.levels) {
    r.mean_acc += l.acc;
    r.mean_f1 += l.f1;
    r.mean_prec += l.prec;
  }
  r.mean_acc /= static_cast<double>(count);
  r.mean_f1 /= static_cast<double>(count);
  r.mean_prec /= static_cast<double>(count);
  return r;
}

RobustnessReport robustness_report(const PowerNetwork& net, const DetectorModel& model, const PlacementGenome& genome,
                                   std::span<const MeasurementFrame> test, const RobustnessConfig& config) {
  const auto levels = config.levels.empty()
                          ? failure_levels(net.size(), genome.popcount(), config.max_levels, config.max_fraction)
                          : config.levels;
  if (config.trials < 1) throw ConfigError("robustness needs at least one trial per level");
  const int n_levels = static_cast<int>(levels.size());
  const int slots = n_levels * config.trials;
  std::vector<DetectionMetrics> results(static_cast<std::size_t>(slots));
  std::vector<std::vector<PlacementGenome>> degraded;
  for (int k : levels) degraded.push_back(simulate_failures(genome, k, config.trials, config.seed));
  auto run = [&](int slot) {
    const int l = slot / config.trials, m = slot % config.trials;
    results[slot] = evaluate(model, test, observation_mask(net, degraded[l][m]), config.threshold);
  };
  if (config.exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic) num_threads(worker_count())
    for (int slot = 0; slot < slots; ++slot) run(slot);
  } else {
    for (int slot = 0; slot < slots; ++slot) run(slot);
  }
  std::vector<LevelMetrics> trace;
  for (int l = 0; l < n_levels; ++l) {
    LevelMetrics lm{levels[l]};
    for (int m = 0; m < config.trials; ++m) {
      const auto& d = results[l * config.trials + m];
      lm.acc += d.acc;
      lm.tpr += d.tpr;
      lm.fpr += d.fpr;
      lm.prec += d.prec;
      lm.f1 += d.f1;
    }
    const double t = config.trials;
    lm.acc /= t;
    lm.tpr /= t;
    lm.fpr /= t;
    lm.prec /= t;
    lm.f1 /= t;
    trace.push_back(lm);
  }
  return robustness_from_trace(std::move(trace));
}

std::vector<ComparisonRow> compare_placements(const PowerNetwork& net, std::span<const PlacementMethod> methods,
                                              const Splits& splits, const TrainConfig& train_config,
                                              const RobustnessConfig& robustness) {
  struct Trained {
    DetectionMetrics metrics;
    RobustnessReport robustness;
    double val_loss;
  };
  std::map<std::string, Trained> done;
  auto run = [&](const PlacementGenome& g) -> const Trained& {
    const auto key = g.key();
    if (const auto it = done.find(key); it != done.end()) return it->second;
    const auto mask = observation_mask(net, g);
    const auto trained = train(net, splits.train, splits.val, mask, train_config);
    Trained t{evaluate(trained.model, splits.test, mask), robustness_report(net, trained.model, g, splits.test, robustness),
              trained.val_loss};
    return done.emplace(key, std::move(t)).first->second;
  };
  const Trained base = run(PlacementGenome(net.size()));
  std::vector<ComparisonRow> rows;
  for (const auto& m : methods) {
    const Trained& t = run(m.genome);
    ComparisonRow row{m.name, m.genome, t.metrics, {}, t.robustness, t.val_loss};
    row.improvement.acc = t.metrics.acc - base.metrics.acc;
    row.improvement.tpr = t.metrics.tpr - base.metrics.tpr;
    row.improvement.fpr = t.metrics.fpr - base.metrics.fpr;
    row.improvement.prec = t.metrics.prec - base.metrics.prec;
    row.improvement.f1 = t.metrics.f1 - base.metrics.f1;
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

std::string bus_list(const PlacementGenome& g) {
  std::string out;
  for (int b : g.bus_numbers()) {
    if (!out.empty()) out += ' ';
    out += std::to_string(b);
  }
  return out;
}

}  // namespace

void write_metrics_csv(std::ostream& out, std::span<const ComparisonRow> rows) {
  out << kMetricsHeader << '\n';
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    const auto& d = r.improvement;
    out << r.method << ',' << r.genome.popcount() << ',' << bus_list(r.genome);
    for (double v : {m.acc, m.tpr, m.fpr, m.prec, m.f1, d.acc, d.tpr, d.fpr, d.prec, d.f1, r.val_loss})
      out << ',' << fmt_double(v);
    out << '\n';
  }
}

void write_robustness_csv(std::ostream& out, std::span<const ComparisonRow> rows) {
  out << kRobustnessHeader << '\n';
  for (const auto& r : rows) {
    const auto& rb = r.robustness;
    out << r.method << ',' << rb.f_crit;
    for (double v : {rb.r, rb.a_f1, rb.mean_acc, rb.mean_f1, rb.mean_prec}) out << ',' << fmt_double(v);
    out << '\n';
  }
}

nlohmann::ordered_json comparison_json(std::span<const ComparisonRow> rows) {
  auto metrics = [](const DetectionMetrics& m) {
    nlohmann::ordered_json j;
    j["acc"] = m.acc;
    j["tpr"] = m.tpr;
    j["fpr"] = m.fpr;
    j["prec"] = m.prec;
    j["f1"] = m.f1;
    return j;
  };
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json j;
    j["method"] = r.method;
    j["buses"] = r.genome.bus_numbers();
    j["metrics"] = metrics(r.metrics);
    j["improvement"] = metrics(r.improvement);
    j["val_loss"] = r.val_loss;
    nlohmann::ordered_json rb;
    rb["f_crit"] = r.robustness.f_crit;
    rb["r"] = r.robustness.r;
    rb["a_f1"] = r.robustness.a_f1;
    rb["mean_acc"] = r.robustness.mean_acc;
    rb["mean_f1"] = r.robustness.mean_f1;
    rb["mean_prec"] = r.robustness.mean_prec;
    nlohmann::ordered_json levels = nlohmann::ordered_json::array();
    for (const auto& l : r.robustness.levels)
      levels.push_back({{"failures", l.failures}, {"acc", l.acc}, {"tpr", l.tpr}, {"fpr", l.fpr}, {"prec", l.prec}, {"f1", l.f1}});
    rb["levels"] = std::move(levels);
    j["robustness"] = std::move(rb);
    out.push_back(std::move(j));
  }
  return out;
}

}  // namespace gridsense
