#include "gridsense/nsga2.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>

#include <omp.h>

#include "gridsense/graph.hpp"

namespace gridsense {

void GaConfig::validate() const {
  if (n_pop < 2) throw ConfigError("n_pop must be at least 2");
  if (generations < 0) throw ConfigError("generations must be non-negative");
  if (max_sensors < 1) throw ConfigError("K must be at least 1");
  if (radius < 0) throw ConfigError("radius must be non-negative");
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob(h_frac) || !prob(d_frac) || h_frac + d_frac > 1.0 + 1e-12)
    throw ConfigError("h_frac and d_frac must be probabilities with h_frac + d_frac <= 1");
  if (!prob(d_min) || !prob(indpb) || !prob(b_f) || !prob(crossover_prob))
    throw ConfigError("d_min, indpb, b_F and crossover_prob must lie in [0, 1]");
}

bool constrained_dominates(const Fitness& a, const Fitness& b) {
  const bool fa = a.feasible(), fb = b.feasible();
  if (fa != fb) return fa;
  if (!fa) {
    if (a.violation < b.violation) return true;
    if (a.violation > b.violation) return false;
  }
  const double a1 = a.sensors, b1 = b.sensors;
  const bool no_worse = a1 <= b1 && a.detection_cost <= b.detection_cost;
  const bool better = a1 < b1 || a.detection_cost < b.detection_cost;
  return no_worse && better;
}

std::tuple<int, double, double> champion_key(const Fitness& f) {
  return {f.violation > 0.0 ? 1 : 0, f.violation, static_cast<double>(f.sensors) + f.detection_cost};
}

namespace {

std::vector<int> eligible_nodes(std::span<const std::uint8_t> eligible, int n) {
  std::vector<int> out;
  for (int i = 0; i < n; ++i)
    if (eligible.empty() || eligible[i]) out.push_back(i);
  return out;
}

PlacementGenome random_genome(int n, const std::vector<int>& pool, int max_sensors, Rng& rng) {
  const int cap = std::min<int>(max_sensors, static_cast<int>(pool.size()));
  const int k = 1 + static_cast<int>(uniform01(rng) * cap);
  std::vector<int> picks = pool;
  std::shuffle(picks.begin(), picks.end(), rng);
  PlacementGenome g(n);
  for (int i = 0; i < std::min(k, cap); ++i) g.set(picks[i], true);
  return g;
}

bool contains(const std::vector<PlacementGenome>& pop, const PlacementGenome& g) {
  return std::find(pop.begin(), pop.end(), g) != pop.end();
}

}  // namespace

PlacementGenome greedy_cover(const PowerNetwork& net, std::span<const std::uint8_t> eligible, int max_sensors,
                             int radius, const Vector& scores) {
  const int n = net.size();
  const auto hood = hop_neighborhoods(net.neighbors(), radius);
  const auto pool = eligible_nodes(eligible, n);
  std::vector<std::uint8_t> covered(n, 0);
  PlacementGenome g(n);
  for (int placed = 0; placed < max_sensors; ++placed) {
    int best = -1, best_gain = 0;
    for (int v : pool) {
      if (g[v]) continue;
      int gain = 0;
      for (int u : hood[v]) gain += !covered[u];
      const bool better = gain > best_gain ||
                          (gain == best_gain && best >= 0 && gain > 0 && scores(v) > scores(best));
      if (better) {
        best = v;
        best_gain = gain;
      }
    }
    if (best < 0 || best_gain == 0) break;
    g.set(best, true);
    for (int u : hood[best]) covered[u] = 1;
  }
  return g;
}

InitialPopulation init_population(const PowerNetwork& net, const Vector& scores,
                                  std::span<const std::uint8_t> eligible, const GaConfig& config, Rng& rng) {
  config.validate();
  const int n = net.size();
  const auto pool = eligible_nodes(eligible, n);
  const int nc = static_cast<int>(pool.size());
  if (nc < config.max_sensors) throw ValidationError("fewer eligible buses than K");
  InitialPopulation out;
  auto& pop = out.genomes;
  auto add_unique = [&](const PlacementGenome& g) {
    if (contains(pop, g)) return false;
    pop.push_back(g);
    return true;
  };

  const int n_top = static_cast<int>(std::floor(config.h_frac * config.n_pop / 2.0));
  const int n_greedy = static_cast<int>(std::ceil(config.h_frac * config.n_pop / 2.0));
  for (int i = 0; i < n_top; ++i) {
    // Random keys break ties between equal scores.
    std::vector<std::pair<double, int>> keyed;
    for (int v : pool) keyed.emplace_back(uniform01(rng), v);
    std::sort(keyed.begin(), keyed.end(), [&](const auto& a, const auto& b) {
      if (scores(a.second) != scores(b.second)) return scores(a.second) > scores(b.second);
      return a.first < b.first;
    });
    PlacementGenome g(n);
    for (int k = 0; k < config.max_sensors; ++k) g.set(keyed[k].second, true);
    out.top_k += add_unique(g);
  }
  for (int i = 0; i < n_greedy; ++i)
    out.greedy += add_unique(greedy_cover(net, eligible, config.max_sensors, config.radius, scores));

  const double diverse_target = (config.h_frac + config.d_frac) * config.n_pop;
  const double threshold = config.d_min * nc;
  const int max_attempts = 200 * config.n_pop;
  for (int attempt = 0; static_cast<double>(pop.size()) < diverse_target && attempt < max_attempts; ++attempt) {
    auto g = random_genome(n, pool, config.max_sensors, rng);
    const bool far = std::all_of(pop.begin(), pop.end(),
                                 [&](const PlacementGenome& p) { return hamming(g, p) >= threshold; });
    if (far) {
      pop.push_back(std::move(g));
      ++out.diverse;
    }
  }
  for (int attempt = 0; static_cast<int>(pop.size()) < config.n_pop && attempt < max_attempts; ++attempt)
    out.random += add_unique(random_genome(n, pool, config.max_sensors, rng));
  while (static_cast<int>(pop.size()) < config.n_pop) {
    pop.push_back(random_genome(n, pool, config.max_sensors, rng));
    ++out.duplicates;
  }
  if (out.duplicates > 0)
    std::cerr << "warning: initial population contains " << out.duplicates << " duplicate genomes\n";
  return out;
}

PlacementGenome biased_mutation(const PlacementGenome& genome, const Vector& scores, double indpb, double b_f,
                                Rng& rng) {
  PlacementGenome out = genome;
  for (int i = 0; i < out.size(); ++i) {
    if (uniform01(rng) < indpb) {
      if (uniform01(rng) < b_f)
        out.set(i, uniform01(rng) < scores(i));
      else
        out.set(i, !out[i]);
    }
  }
  return out;
}

std::vector<std::vector<int>> nondominated_sort(std::vector<Individual>& population) {
  const int n = static_cast<int>(population.size());
  std::vector<std::vector<int>> dominated(n);
  std::vector<int> count(n, 0);
  std::vector<std::vector<int>> fronts(1);
  for (int p = 0; p < n; ++p) {
    for (int q = 0; q < n; ++q) {
      if (p == q) continue;
      if (constrained_dominates(population[p].fitness, population[q].fitness))
        dominated[p].push_back(q);
      else if (constrained_dominates(population[q].fitness, population[p].fitness))
        ++count[p];
    }
    if (count[p] == 0) {
      population[p].rank = 1;
      fronts[0].push_back(p);
    }
  }
  for (std::size_t f = 0; !fronts[f].empty(); ++f) {
    std::vector<int> next;
    for (int p : fronts[f]) {
      for (int q : dominated[p]) {
        if (--count[q] == 0) {
          population[q].rank = static_cast<int>(f) + 2;
          next.push_back(q);
        }
      }
    }
    std::sort(next.begin(), next.end());
    fronts.push_back(std::move(next));
  }
  fronts.pop_back();
  return fronts;
}

void crowding_distance(std::vector<Individual>& population, std::span<const int> front) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  for (int i : front) population[i].crowding = 0.0;
  if (front.size() <= 2) {
    for (int i : front) population[i].crowding = inf;
    return;
  }
  const bool feasible = population[front[0]].fitness.feasible();
  std::vector<std::function<double(const Fitness&)>> objectives;
  if (feasible) {
    objectives.emplace_back([](const Fitness& f) { return static_cast<double>(f.sensors); });
    objectives.emplace_back([](const Fitness& f) { return f.detection_cost; });
  } else {
    objectives.emplace_back([](const Fitness& f) { return f.violation; });
  }
  std::vector<int> order(front.begin(), front.end());
  for (const auto& obj : objectives) {
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return obj(population[a].fitness) < obj(population[b].fitness);
    });
    const double lo = obj(population[order.front()].fitness);
    const double hi = obj(population[order.back()].fitness);
    population[order.front()].crowding = inf;
    population[order.back()].crowding = inf;
    if (!(hi > lo) || !std::isfinite(hi - lo)) continue;
    for (std::size_t k = 1; k + 1 < order.size(); ++k) {
      auto& c = population[order[k]].crowding;
      if (std::isinf(c)) continue;
      c += (obj(population[order[k + 1]].fitness) - obj(population[order[k - 1]].fitness)) / (hi - lo);
    }
  }
}

int select_champion(const std::vector<Individual>& population, std::span<const int> candidates) {
  int best = -1;
  for (int i : candidates) {
    if (best < 0) {
      best = i;
      continue;
    }
    const auto ki = champion_key(population[i].fitness), kb = champion_key(population[best].fitness);
    if (ki < kb || (ki == kb && population[i].genome.key() < population[best].genome.key())) best = i;
  }
  return best;
}

namespace {

class FitnessCache {
 public:
  FitnessCache(const Evaluator& evaluator, const EvolveOptions& options)
      : evaluator_(evaluator), options_(options) {}

  // Evaluates every genome not yet cached; concurrent calls touch disjoint
  // result slots and the cache is written afterwards on this thread.
  void fill(std::vector<Individual>& individuals) {
    std::vector<const PlacementGenome*> todo;
    std::map<std::string, int> pending;
    for (const auto& ind : individuals) {
      const auto key = ind.genome.key();
      if (cache_.count(key) || pending.count(key)) continue;
      pending.emplace(key, static_cast<int>(todo.size()));
      todo.push_back(&ind.genome);
    }
    std::vector<Fitness> results(todo.size());
    std::vector<std::string> errors(todo.size());
    const int count = static_cast<int>(todo.size());
    auto run = [&](int k) {
      try {
        results[k] = evaluator_(*todo[k]);
      } catch (const std::exception& e) {
        results[k] = Fitness::worst(todo[k]->popcount());
        errors[k] = e.what();
      }
    };
    if (options_.exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic) num_threads(worker_count())
      for (int k = 0; k < count; ++k) run(k);
    } else {
      for (int k = 0; k < count; ++k) run(k);
    }
    for (int k = 0; k < count; ++k) {
      if (results[k].failed) {
        ++failures_;
        if (options_.on_failure) options_.on_failure(*todo[k], errors[k]);
      }
      cache_.emplace(todo[k]->key(), results[k]);
    }
    for (auto& ind : individuals) ind.fitness = cache_.at(ind.genome.key());
  }

  int size() const { return static_cast<int>(cache_.size()); }
  int failures() const { return failures_; }

 private:
  const Evaluator& evaluator_;
  const EvolveOptions& options_;
  std::map<std::string, Fitness> cache_;
  int failures_ = 0;
};

Individual& tournament(std::vector<Individual>& pop, Rng& rng) {
  const auto n = pop.size();
  auto& a = pop[static_cast<std::size_t>(uniform01(rng) * n)];
  auto& b = pop[static_cast<std::size_t>(uniform01(rng) * n)];
  if (a.rank != b.rank) return a.rank < b.rank ? a : b;
  return b.crowding > a.crowding ? b : a;
}

void apply_mask(PlacementGenome& g, std::span<const std::uint8_t> eligible) {
  if (eligible.empty()) return;
  for (int i = 0; i < g.size(); ++i)
    if (!eligible[i]) g.set(i, false);
}

std::vector<std::vector<int>> rank_population(std::vector<Individual>& pop) {
  auto fronts = nondominated_sort(pop);
  for (const auto& f : fronts) crowding_distance(pop, f);
  return fronts;
}

}  // namespace

EvolveResult evolve(const PowerNetwork& net, const Vector& scores, const Evaluator& evaluator,
                    const GaConfig& config, const EvolveOptions& options) {
  config.validate();
  const int n = net.size();
  if (!options.eligible.empty() && static_cast<int>(options.eligible.size()) != n)
    throw ValidationError("eligibility mask length mismatch");
  FitnessCache cache(evaluator, options);

  Rng init_rng = make_rng(config.seed, 0x696e6974);
  auto init = init_population(net, scores, options.eligible, config, init_rng);
  std::vector<Individual> pop;
  for (auto& g : init.genomes) pop.push_back(Individual{std::move(g), {}, 0, 0.0});
  cache.fill(pop);
  auto fronts = rank_population(pop);

  EvolveResult result;
  auto log_generation = [&](int gen, const std::vector<std::vector<int>>& fr, const Individual& champ) {
    GenerationLog entry{gen, champ.fitness, {}, cache.size(), cache.failures()};
    for (const auto& f : fr) entry.front_sizes.push_back(static_cast<int>(f.size()));
    if (options.on_generation) options.on_generation(entry);
    result.history.push_back(std::move(entry));
  };
  log_generation(0, fronts, pop[select_champion(pop, fronts[0])]);

  for (int gen = 1; gen <= config.generations; ++gen) {
    std::vector<Individual> offspring;
    Rng select_rng = make_rng(config.seed, static_cast<std::uint64_t>(gen), 0x73656c);
    for (int k = 0; static_cast<int>(offspring.size()) < config.n_pop; ++k) {
      const PlacementGenome& pa = tournament(pop, select_rng).genome;
      const PlacementGenome& pb = tournament(pop, select_rng).genome;
      Rng rng = make_rng(config.seed, static_cast<std::uint64_t>(gen), static_cast<std::uint64_t>(k) + 1);
      PlacementGenome ca = pa, cb = pb;
      if (uniform01(rng) < config.crossover_prob) {
        for (int i = 0; i < n; ++i) {
          if (uniform01(rng) < 0.5) {
            ca.set(i, pb[i]);
            cb.set(i, pa[i]);
          }
        }
      }
      ca = biased_mutation(ca, scores, config.indpb, config.b_f, rng);
      cb = biased_mutation(cb, scores, config.indpb, config.b_f, rng);
      apply_mask(ca, options.eligible);
      apply_mask(cb, options.eligible);
      offspring.push_back(Individual{std::move(ca), {}, 0, 0.0});
      if (static_cast<int>(offspring.size()) < config.n_pop)
        offspring.push_back(Individual{std::move(cb), {}, 0, 0.0});
    }
    cache.fill(offspring);

    std::vector<Individual> joint = std::move(pop);
    joint.insert(joint.end(), std::make_move_iterator(offspring.begin()),
                 std::make_move_iterator(offspring.end()));
    const auto joint_fronts = rank_population(joint);
    const int champ = select_champion(joint, joint_fronts[0]);

    std::vector<Individual> next;
    for (const auto& front : joint_fronts) {
      if (static_cast<int>(next.size() + front.size()) <= config.n_pop) {
        for (int i : front) next.push_back(joint[i]);
        continue;
      }
      std::vector<int> order(front.begin(), front.end());
      std::stable_sort(order.begin(), order.end(),
                       [&](int a, int b) { return joint[a].crowding > joint[b].crowding; });
      // The champion always survives truncation.
      if (const auto it = std::find(order.begin(), order.end(), champ); it != order.end())
        std::rotate(order.begin(), it, it + 1);
      for (int i : order) {
        if (static_cast<int>(next.size()) >= config.n_pop) break;
        next.push_back(joint[i]);
      }
      break;
    }
    pop = std::move(next);
    fronts = rank_population(pop);
    log_generation(gen, fronts, pop[select_champion(pop, fronts[0])]);
  }

  result.champion = pop[select_champion(pop, fronts[0])];
  result.pareto = fronts[0];
  result.population = std::move(pop);
  result.evaluations = cache.size();
  return result;
}

}  // namespace gridsense
