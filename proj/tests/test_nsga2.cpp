#include <doctest.h>

#include <atomic>
#include <limits>
#include <numeric>
#include <set>

#include "gridsense/importance.hpp"
#include "gridsense/nsga2.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace gridsense;
using gridsense::test::case14;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<Individual> population_of(const std::vector<Fitness>& fits) {
  std::vector<Individual> pop;
  for (std::size_t i = 0; i < fits.size(); ++i) {
    Individual ind;
    ind.genome = PlacementGenome(8);
    for (int b = 0; b < 8; ++b) ind.genome.set(b, (i >> b) & 1U);
    ind.fitness = fits[i];
    pop.push_back(ind);
  }
  return pop;
}

Fitness feasible(int f1, double f2) { return Fitness{0.0, f1, f2, false}; }

Fitness random_fitness(Rng& rng) {
  Fitness f;
  f.violation = uniform01(rng) < 0.5 ? 0.0 : std::round(uniform01(rng) * 4) / 4 + 0.25;
  f.sensors = static_cast<int>(uniform01(rng) * 5);
  f.detection_cost = std::round(uniform01(rng) * 6) / 6;
  return f;
}

double covered_share(const PowerNetwork& net, const PlacementGenome& g, int r) {
  const auto hood = hop_neighborhoods(net.neighbors(), r);
  int covered = 0;
  for (int j = 0; j < net.size(); ++j) {
    bool c = false;
    for (int i : hood[j]) c = c || g[i];
    covered += c;
  }
  return static_cast<double>(covered) / net.size();
}

}  // namespace

TEST_CASE("hybrid initialization with h_frac = 1 and two members") {
  const auto& net = case14();
  const auto scores = importance_scores(net).score;
  GaConfig cfg;
  cfg.n_pop = 2;
  cfg.h_frac = 1.0;
  cfg.d_frac = 0.0;
  cfg.max_sensors = 3;
  Rng rng(1);
  const auto init = init_population(net, scores, {}, cfg, rng);
  REQUIRE(init.genomes.size() == 2);
  CHECK(init.top_k == 1);
  CHECK(init.greedy == 1);

  std::vector<int> order(14);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores(a) > scores(b); });
  PlacementGenome top(14);
  for (int k = 0; k < 3; ++k) top.set(order[k], true);
  const auto greedy = greedy_cover(net, {}, 3, 1, scores);
  REQUIRE(top != greedy);
  CHECK(init.genomes[0] == top);
  CHECK(init.genomes[1] == greedy);
}

TEST_CASE("diversity gate") {
  const auto& net = case14();
  const auto scores = importance_scores(net).score;
  GaConfig cfg;
  cfg.max_sensors = 4;

  SUBCASE("d_min = 0 accepts every draw") {
    cfg.d_min = 0.0;
    Rng rng(3);
    const auto init = init_population(net, scores, {}, cfg, rng);
    CHECK(init.diverse == static_cast<int>(std::ceil((cfg.h_frac + cfg.d_frac) * cfg.n_pop)) - init.top_k - init.greedy);
    CHECK(init.genomes.size() == static_cast<std::size_t>(cfg.n_pop));
  }
  SUBCASE("default threshold holds across the diversity block") {
    Rng rng(5);
    const auto init = init_population(net, scores, {}, cfg, rng);
    CHECK(init.genomes.size() == static_cast<std::size_t>(cfg.n_pop));
    CHECK(init.diverse > 0);
    const int start = init.top_k + init.greedy;
    for (int i = start; i < start + init.diverse; ++i)
      for (int j = 0; j < i; ++j) CHECK(hamming(init.genomes[i], init.genomes[j]) >= cfg.d_min * 14);
    for (const auto& g : init.genomes) CHECK(g.popcount() <= cfg.max_sensors);
  }
  SUBCASE("bounded retries fall back to duplicates") {
    const auto tiny = gridsense::test::graph_network(2, gridsense::test::path_edges(2));
    GaConfig c;
    c.n_pop = 6;
    c.max_sensors = 1;
    Rng rng(1);
    const auto init = init_population(tiny, Vector::Ones(2), {}, c, rng);
    CHECK(init.genomes.size() == 6);
    CHECK(init.duplicates > 0);
  }
}

TEST_CASE("greedy r-hop cover") {
  const std::vector<std::pair<int, int>> star{{0, 1}, {0, 2}, {0, 3}, {0, 4}};
  const auto s = gridsense::test::graph_network(5, star);
  CHECK(greedy_cover(s, {}, 1, 1, Vector::Zero(5)).bus_numbers() == std::vector<int>{1});
  const auto p = gridsense::test::graph_network(3, gridsense::test::path_edges(3));
  CHECK(greedy_cover(p, {}, 1, 1, Vector::Zero(3)).bus_numbers() == std::vector<int>{2});

  const auto& net = case14();
  const auto scores = importance_scores(net).score;
  const auto g = greedy_cover(net, {}, 4, 1, scores);
  CHECK(g.popcount() <= 4);
  const double best = covered_share(net, g, 1);
  // Greedy must open with bus 4 and then cannot finish a dominating set; the
  // only 4-sets that beat it are the few full covers avoiding bus 4.
  CHECK(best == doctest::Approx(13.0 / 14.0));
  Rng rng(500);
  int beaten = 0;
  for (int k = 0; k < 500; ++k) {
    std::vector<int> idx(14);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    PlacementGenome r(14);
    for (int j = 0; j < 4; ++j) r.set(idx[j], true);
    const double c = covered_share(net, r, 1);
    if (c > best) {
      ++beaten;
      CHECK(c == 1.0);
      CHECK_FALSE(r[3]);
    }
  }
  CHECK(beaten <= 5);
}

TEST_CASE("biased mutation branches") {
  Rng rng(1);
  PlacementGenome g(10);
  for (int i = 0; i < 10; i += 3) g.set(i, true);
  CHECK(biased_mutation(g, Vector::Constant(10, 0.5), 0.0, 0.8, rng) == g);

  const auto ones = biased_mutation(g, Vector::Ones(10), 1.0, 1.0, rng);
  CHECK(ones.popcount() == 10);

  const auto flipped = biased_mutation(g, Vector::Constant(10, 0.5), 1.0, 0.0, rng);
  for (int i = 0; i < 10; ++i) CHECK(flipped[i] != g[i]);
}

TEST_CASE("non-dominated sorting examples") {
  auto pop = population_of({feasible(1, 1), feasible(1, 2), feasible(2, 1), feasible(2, 2)});
  const auto fronts = nondominated_sort(pop);
  REQUIRE(fronts.size() == 3);
  CHECK(fronts[0] == std::vector<int>{0});
  CHECK(fronts[1] == std::vector<int>{1, 2});
  CHECK(fronts[2] == std::vector<int>{3});

  auto mixed = population_of({Fitness{0.3, 0, 0.0, false}, feasible(9, 9)});
  const auto f2 = nondominated_sort(mixed);
  CHECK(f2[0] == std::vector<int>{1});
  CHECK(mixed[1].rank == 1);
  CHECK(mixed[0].rank == 2);

  auto same = population_of({feasible(2, 0.5), feasible(2, 0.5), feasible(2, 0.5)});
  CHECK(nondominated_sort(same).size() == 1);
}

TEST_CASE("non-dominated sorting matches the brute-force oracle") {
  Rng rng(77);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + static_cast<int>(uniform01(rng) * 50);
    std::vector<Fitness> fits;
    for (int i = 0; i < n; ++i) fits.push_back(random_fitness(rng));
    auto pop = population_of(fits);
    const auto fronts = nondominated_sort(pop);
    const auto ranks = gridsense::test::oracle_ranks(fits);
    std::size_t total = 0;
    for (const auto& f : fronts) total += f.size();
    REQUIRE(total == static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) REQUIRE(pop[i].rank == ranks[i]);
  }
}

TEST_CASE("crowding distance") {
  auto two = population_of({feasible(1, 1), feasible(2, 0)});
  const std::vector<int> both{0, 1};
  crowding_distance(two, both);
  CHECK(two[0].crowding == kInf);
  CHECK(two[1].crowding == kInf);

  auto line = population_of({feasible(0, 4), feasible(1, 3), feasible(2, 2), feasible(3, 1), feasible(4, 0)});
  const std::vector<int> all{0, 1, 2, 3, 4};
  crowding_distance(line, all);
  CHECK(line[0].crowding == kInf);
  CHECK(line[4].crowding == kInf);
  CHECK(line[1].crowding == doctest::Approx(1.0));
  CHECK(line[2].crowding == doctest::Approx(line[1].crowding));
  CHECK(line[3].crowding == doctest::Approx(line[1].crowding));

  Rng rng(100);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + static_cast<int>(uniform01(rng) * 20);
    const bool infeasible = trial % 4 == 0;
    std::vector<Fitness> fits;
    std::vector<std::vector<double>> objs;
    for (int i = 0; i < n; ++i) {
      Fitness f{infeasible ? 0.1 + uniform01(rng) : 0.0, static_cast<int>(uniform01(rng) * 6), uniform01(rng), false};
      fits.push_back(f);
      if (infeasible)
        objs.push_back({f.violation});
      else
        objs.push_back({static_cast<double>(f.sensors), f.detection_cost});
    }
    auto pop = population_of(fits);
    std::vector<int> front(n);
    std::iota(front.begin(), front.end(), 0);
    crowding_distance(pop, front);
    const auto expect = gridsense::test::oracle_crowding(objs);
    for (int i = 0; i < n; ++i) {
      if (std::isinf(expect[i]))
        CHECK(std::isinf(pop[i].crowding));
      else
        CHECK(pop[i].crowding == doctest::Approx(expect[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("champion rule") {
  auto pop = population_of({Fitness{0.1, 1, 0.0, false}, feasible(5, 0.0)});
  const std::vector<int> both{0, 1};
  CHECK(select_champion(pop, both) == 1);

  auto infeasible = population_of({Fitness{0.3, 1, 0.0, false}, Fitness{0.2, 9, 9.0, false}});
  CHECK(select_champion(infeasible, both) == 1);

  auto sums = population_of({feasible(3, 0.4), feasible(2, 0.5)});
  CHECK(select_champion(sums, both) == 1);
  CHECK(champion_key(Fitness{0.2, 3, 0.5, false}) == std::tuple<int, double, double>{1, 0.2, 3.5});
  CHECK(constrained_dominates(feasible(9, 9), Fitness{0.01, 0, 0, false}));
}

TEST_CASE("evolve reaches the minimum connected dominating set") {
  const auto& net = case14();
  const auto scores = importance_scores(net).score;
  ConstraintConfig cc;
  cc.min_redundancy = 1;
  const PlacementProblem problem(net, cc, Vector::Ones(14));

  int optimum = 14;
  for (unsigned mask = 1; mask < (1U << 14); ++mask) {
    PlacementGenome g(14);
    for (int i = 0; i < 14; ++i) g.set(i, (mask >> i) & 1U);
    if (g.popcount() < optimum && problem.evaluate(g).total == 0.0) optimum = g.popcount();
  }

  std::atomic<int> calls{0};
  const Evaluator eval = [&](const PlacementGenome& g) {
    ++calls;
    return Fitness{problem.evaluate(g).total, g.popcount(), 0.0, false};
  };
  GaConfig cfg;
  cfg.n_pop = 20;
  cfg.generations = 60;
  cfg.max_sensors = optimum;
  cfg.seed = 4;
  const auto res = evolve(net, scores, eval, cfg);
  CHECK(res.champion.fitness.feasible());
  CHECK(res.champion.fitness.sensors == optimum);
  CHECK(calls.load() == res.evaluations);

  std::set<std::string> distinct;
  for (const auto& ind : res.population) distinct.insert(ind.genome.key());
  CHECK(res.evaluations >= static_cast<int>(distinct.size()));
}

TEST_CASE("evolve invariants and determinism") {
  const auto& net = case14();
  const auto scores = importance_scores(net).score;
  const PlacementProblem problem(net, ConstraintConfig{}, scores);
  const Evaluator eval = [&](const PlacementGenome& g) {
    double f2 = 0.0;
    for (int i = 0; i < g.size(); ++i) f2 += g[i] ? std::sin(1.0 + i) * 0.1 : 0.0;
    return Fitness{problem.evaluate(g).total, g.popcount(), f2, false};
  };
  GaConfig cfg;
  cfg.n_pop = 16;
  cfg.generations = 12;
  cfg.seed = 21;

  const auto a = evolve(net, scores, eval, cfg);
  EvolveOptions serial;
  serial.exec = Exec::serial;
  const auto b = evolve(net, scores, eval, cfg, serial);
  CHECK(a.champion.genome == b.champion.genome);
  CHECK(a.champion.fitness == b.champion.fitness);
  REQUIRE(a.population.size() == b.population.size());
  for (std::size_t i = 0; i < a.population.size(); ++i) CHECK(a.population[i].genome == b.population[i].genome);

  CHECK(a.population.size() == static_cast<std::size_t>(cfg.n_pop));
  REQUIRE(a.history.size() == static_cast<std::size_t>(cfg.generations + 1));
  for (std::size_t g = 1; g < a.history.size(); ++g)
    CHECK(champion_key(a.history[g].champion) <= champion_key(a.history[g - 1].champion));

  for (int i : a.pareto) {
    CHECK(a.population[i].rank == 1);
    for (const auto& other : a.population) CHECK_FALSE(gridsense::test::oracle_dominates(other.fitness, a.population[i].fitness));
  }
  for (int gens = 0; gens < 6; ++gens) {
    GaConfig c = cfg;
    c.generations = gens;
    const auto r = evolve(net, scores, eval, c);
    CHECK(r.population.size() == static_cast<std::size_t>(cfg.n_pop));
    std::vector<Fitness> fits;
    for (const auto& ind : r.population) fits.push_back(ind.fitness);
    const auto ranks = gridsense::test::oracle_ranks(fits);
    for (std::size_t i = 0; i < fits.size(); ++i) CHECK(r.population[i].rank == ranks[i]);
  }
}

TEST_CASE("evaluator failures get the worst fitness") {
  const auto& net = case14();
  const auto scores = importance_scores(net).score;
  const Evaluator eval = [](const PlacementGenome& g) -> Fitness {
    if (g.popcount() % 2 == 1) throw std::runtime_error("odd");
    return Fitness{0.0, g.popcount(), 0.0, false};
  };
  GaConfig cfg;
  cfg.n_pop = 10;
  cfg.generations = 3;
  std::atomic<int> failures{0};
  EvolveOptions opt;
  opt.on_failure = [&](const PlacementGenome&, const std::string& what) {
    CHECK(what.find("odd") != std::string::npos);
    ++failures;
  };
  const auto res = evolve(net, scores, eval, cfg, opt);
  CHECK(failures.load() > 0);
  CHECK(res.champion.genome.popcount() % 2 == 0);
  for (const auto& ind : res.population)
    if (ind.genome.popcount() % 2 == 1) CHECK(ind.fitness == Fitness::worst(ind.genome.popcount()));
}

TEST_CASE("GA config validation") {
  GaConfig cfg;
  cfg.h_frac = 0.8;
  cfg.d_frac = 0.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = GaConfig{};
  cfg.max_sensors = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
