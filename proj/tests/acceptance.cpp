// One PASS/FAIL line per acceptance criterion. Optional arguments select
// criteria by number, e.g. `acceptance 3 4`.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>
#include <vector>

#include "gridsense/experiment.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace gridsense;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string format(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

double rel(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale < 1e-7 ? std::abs(a - b) : std::abs(a - b) / scale;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<MeasurementFrame> benign(const PowerNetwork& net, int length, std::uint64_t seed) {
  ProfileConfig pc;
  pc.length = length;
  pc.seed = seed;
  return generate_dataset(net, make_load_profile(net, pc)).frames;
}

// Shared by criteria 5 and 7.
struct ClosedLoop {
  PipelineData data;
  OptimizeOutcome outcome;
};

const ClosedLoop& closed_loop() {
  static const ClosedLoop run = [] {
    ExperimentConfig cfg;
    cfg.ga.n_pop = 16;
    cfg.ga.generations = 10;
    cfg.resolve();
    ClosedLoop c{prepare_pipeline(cfg), {}};
    c.outcome = run_optimize(cfg, c.data);
    return c;
  }();
  return run;
}

Outcome physics_separation() {
  const auto& net = test::case14();
  const auto frames = benign(net, 200, 11);
  double worst_benign = 0.0, least_attacked = std::numeric_limits<double>::infinity();
  int over = 0;
  for (std::size_t k = 0; k < frames.size(); ++k) {
    const auto b = physics_residuals(frames[k].values);
    worst_benign = std::max(worst_benign, b.l_p + b.l_q);
    AttackConfig cfg;
    cfg.alpha = 0.1;
    cfg.target_fraction = 0.3;
    cfg.seed = k;
    const auto a = physics_residuals(attack_random(frames[k], cfg).values);
    least_attacked = std::min(least_attacked, a.l_p + a.l_q);
    over += a.l_p + a.l_q > 1e-4;
  }
  const int n = static_cast<int>(frames.size());
  return {worst_benign < 1e-9 && over == n,
          format("benign max %.3g (< 1e-9), attacked min %.3g, %d/%d attacked frames above 1e-4", worst_benign,
                 least_attacked, over, n)};
}

Outcome physics_regularization() {
  std::vector<double> with, without;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    ExperimentConfig cfg;
    cfg.seed = seed;
    cfg.resolve();
    const auto data = prepare_pipeline(cfg);
    const auto layout = greedy_placement(data.net, data.scores.score, 4, cfg.ga.seed);
    const auto mask = observation_mask(data.net, layout);
    for (double lambda : {0.2, 0.0}) {
      auto tc = cfg.detector;
      tc.lambda_phy = lambda;
      const auto trained = train(data.net, data.splits.train, data.splits.val, mask, tc);
      (lambda > 0 ? with : without).push_back(evaluate(trained.model, data.splits.test, mask).f1);
    }
  }
  const double a = median(with), b = median(without);
  return {a >= b, format("median F1 %.4f with lambda_phy 0.2, %.4f without (10 seeds)", a, b)};
}

Outcome nsga2_correctness() {
  Rng rng(101);
  int mismatches = 0, mixed = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + static_cast<int>(uniform01(rng) * 50);
    std::vector<Fitness> fits;
    std::vector<Individual> pop;
    for (int i = 0; i < n; ++i) {
      Fitness f;
      f.violation = uniform01(rng) < 0.5 ? 0.0 : std::round(uniform01(rng) * 4) / 4 + 0.25;
      f.sensors = static_cast<int>(uniform01(rng) * 6);
      f.detection_cost = std::round(uniform01(rng) * 8) / 8;
      fits.push_back(f);
      Individual ind;
      ind.genome = PlacementGenome(1);
      ind.fitness = f;
      pop.push_back(ind);
    }
    bool feasible = false, infeasible = false;
    for (const auto& f : fits) (f.feasible() ? feasible : infeasible) = true;
    mixed += feasible && infeasible;
    nondominated_sort(pop);
    const auto ranks = test::oracle_ranks(fits);
    for (int i = 0; i < n; ++i) mismatches += pop[i].rank != ranks[i];
  }

  auto individuals = [](std::vector<Fitness> fits) {
    std::vector<Individual> pop;
    for (std::size_t i = 0; i < fits.size(); ++i) {
      Individual ind;
      ind.genome = PlacementGenome(4);
      ind.genome.set(static_cast<int>(i), true);
      ind.fitness = fits[i];
      pop.push_back(ind);
    }
    return pop;
  };
  const std::vector<int> both{0, 1};
  int fixtures = 0;
  fixtures += select_champion(individuals({{0.05, 1, 0.0, false}, {0.0, 9, 5.0, false}}), both) == 1;
  fixtures += select_champion(individuals({{0.4, 1, 0.1, false}, {0.2, 9, 5.0, false}}), both) == 1;
  fixtures += select_champion(individuals({{0.0, 4, 0.3, false}, {0.0, 3, 0.5, false}}), both) == 1;
  fixtures += select_champion(individuals({Fitness::worst(2), {0.9, 2, 1.0, false}}), both) == 1;
  return {mismatches == 0 && fixtures == 4,
          format("%d rank mismatches over 1000 populations (%d mixed), %d/4 champion fixtures", mismatches, mixed,
                 fixtures)};
}

Outcome constraint_oracles() {
  int mismatches = 0, connected = 0;
  double worst = 0.0;
  for (const char* name : {"case14", "case30", "case39"}) {
    const auto& net = test::bundled(name);
    const int n = net.size();
    const auto d = test::hop_matrix(net);
    Rng rng(derive_seed(7, static_cast<std::uint64_t>(n)));
    std::vector<double> w(static_cast<std::size_t>(n));
    for (auto& x : w) x = uniform01(rng);
    for (int k = 0; k < 500; ++k) {
      PlacementGenome g(n);
      const double density = 0.1 + 0.6 * uniform01(rng);
      for (int i = 0; i < n; ++i) g.set(i, uniform01(rng) < density);
      const bool fast = check_connectivity(net, g) == 0.0;
      mismatches += fast != test::flow_feasible(net, g);
      connected += fast;
      const int r = k % 3, rmin = 1 + k % 3;
      worst = std::max(worst, std::abs(coverage_penalty(net, g, r, w) - test::oracle_coverage(d, g, r, w)));
      worst = std::max(worst, std::abs(redundancy_penalty(net, g, r, rmin) - test::oracle_redundancy(d, g, r, rmin)));
    }
  }
  return {mismatches == 0 && worst <= 1e-12,
          format("%d connectivity mismatches over 1500 genomes (%d connected), max penalty gap %.2g", mismatches,
                 connected, worst)};
}

Outcome closed_loop_improvement() {
  const auto& run = closed_loop();
  ExperimentConfig cfg;
  cfg.ga.n_pop = 16;
  cfg.ga.generations = 10;
  cfg.resolve();
  const std::vector<PlacementMethod> methods{PlacementMethod{"ga", run.outcome.evolve.champion.genome},
                                             PlacementMethod{"greedy", run.outcome.greedy}};
  RobustnessConfig rc;
  rc.seed = derive_seed(cfg.seed, 5);
  const auto rows = compare_placements(run.data.net, methods, run.data.splits, cfg.detector, rc);
  const auto& ga = rows[0];
  const auto& greedy = rows[1];
  const bool pass = ga.metrics.f1 >= greedy.metrics.f1 - 0.02 && ga.robustness.r >= greedy.robustness.r;
  std::ostringstream buses;
  for (int b : ga.genome.bus_numbers()) buses << ' ' << b;
  return {pass, format("GA {%s} F1 %.4f R %.4f vs greedy F1 %.4f R %.4f", buses.str().c_str() + 1, ga.metrics.f1,
                       ga.robustness.r, greedy.metrics.f1, greedy.robustness.r)};
}

Outcome robustness_arithmetic() {
  Rng rng(5);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int levels = 1 + static_cast<int>(uniform01(rng) * 8);
    std::vector<LevelMetrics> trace;
    int k = 0;
    for (int l = 0; l < levels; ++l) {
      LevelMetrics m;
      m.failures = k;
      k += 1 + static_cast<int>(uniform01(rng) * 3);
      m.acc = 0.5 + 0.5 * uniform01(rng);
      m.f1 = uniform01(rng);
      trace.push_back(m);
    }
    double deg = 0.0;
    for (int l = 1; l < levels; ++l) deg += (trace[0].acc - trace[l].acc) / trace[0].acc;
    deg = levels > 1 ? std::max(0.0, deg / (levels - 1)) : 0.0;
    double area = levels > 1 ? 0.0 : trace[0].f1;
    for (int l = 1; l < levels; ++l)
      area += (trace[l].failures - trace[l - 1].failures) * (trace[l].f1 + trace[l - 1].f1) / 2.0 / trace.back().failures;
    const auto rep = robustness_from_trace(trace);
    worst = std::max({worst, std::abs(rep.r - 1.0 / (1.0 + deg)), std::abs(rep.a_f1 - area)});
  }
  std::vector<LevelMetrics> fixed(3);
  fixed[0] = {0, 0.8, 0, 0, 0, 0.9};
  fixed[1] = {2, 0.76, 0, 0, 0, 0.85};
  fixed[2] = {4, 0.68, 0, 0, 0, 0.7};
  const auto rep = robustness_from_trace(fixed);
  worst = std::max({worst, std::abs(rep.r - 1.0 / 1.1), std::abs(rep.a_f1 - 0.825)});
  return {worst <= 1e-12, format("max deviation from hand formulas %.2g over 1001 traces", worst)};
}

Outcome wls_sanity() {
  const auto& net = test::case14();
  const auto frames = benign(net, 20, 21);
  const PlacementGenome full(std::vector<std::uint8_t>(14, 1));
  double truth_gap = 0.0;
  for (const auto& f : frames) {
    const auto est = wls_estimate(net, build_measurement_set(net, f, full));
    truth_gap = std::max({truth_gap, (est.vm - f.values.col(static_cast<int>(Channel::V))).cwiseAbs().maxCoeff(),
                          (est.va - f.values.col(static_cast<int>(Channel::theta))).cwiseAbs().maxCoeff()});
  }
  const auto& champion = closed_loop().outcome.evolve.champion.genome;
  int wins = 0;
  double vm = 0.0, va = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    PsseConfig pc;
    pc.seed = seed;
    const auto c = psse_improvement(net, frames, PlacementGenome(14), champion, pc);
    wins += c.mean_vm_b < c.mean_vm_a && c.mean_va_b < c.mean_va_a;
    vm += c.improvement_vm / 20;
    va += c.improvement_va / 20;
  }
  return {truth_gap < 1e-6 && wins >= 18,
          format("noiseless gap %.2g, placement better on %d/20 seeds (mean reduction Vm %.1f%%, Va %.1f%%)",
                 truth_gap, wins, vm, va)};
}

Outcome gradient_checks() {
  const auto& net = test::case14();
  const auto frames = benign(net, 10, 31);
  Rng rng(41);
  double detector = 0.0;
  const auto mask = observation_mask(net, PlacementGenome::from_bus_numbers(14, std::vector<int>{2, 6, 9}));
  DetectorModel model(net, 2, 16, 3);
  model.fit_normalization(frames);
  for (Eigen::Index k = 0; k < model.parameter_count(); ++k) model.parameters()(k) += 0.3 * (uniform01(rng) - 0.5);
  TrainConfig tc;
  AttackConfig ac;
  ac.seed = 4;
  const auto attacked = attack_random(frames[3], ac);
  for (int probe = 0; probe < 100; ++probe) {
    const auto sample = model.prepare(probe % 2 ? attacked : frames[probe % 10], mask);
    Vector grad = Vector::Zero(model.parameter_count());
    model.loss(sample, tc, &grad);
    const auto k = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(model.parameter_count()));
    const double keep = model.parameters()(k), h = 1e-5;
    model.parameters()(k) = keep + h;
    const double up = model.loss(sample, tc).total;
    model.parameters()(k) = keep - h;
    const double down = model.loss(sample, tc).total;
    model.parameters()(k) = keep;
    detector = std::max(detector, rel(grad(k), (up - down) / (2 * h)));
  }

  auto random_state = [&](Vector& vm, Vector& va) {
    vm.resize(14);
    va.resize(14);
    for (int i = 0; i < 14; ++i) {
      vm(i) = 0.9 + 0.2 * uniform01(rng);
      va(i) = i == net.slack() ? 0.0 : 0.4 * (uniform01(rng) - 0.5);
    }
  };
  const double h = 1e-6;
  double wls = 0.0;
  const auto set = build_measurement_set(net, frames[0], PlacementGenome::from_bus_numbers(14, std::vector<int>{4, 9, 13}));
  for (int probe = 0; probe < 100; ++probe) {
    Vector vm, va;
    random_state(vm, va);
    const Matrix jac = measurement_jacobian(net, set, vm, va);
    const int c = static_cast<int>(rng() % 27);
    const auto r = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(jac.rows()));
    Vector vm_p = vm, vm_m = vm, va_p = va, va_m = va;
    if (c < 13) {
      va_p(c + 1) += h;
      va_m(c + 1) -= h;
    } else {
      vm_p(c - 13) += h;
      vm_m(c - 13) -= h;
    }
    const double fd = (measurement_function(net, set, vm_p, va_p)(r) - measurement_function(net, set, vm_m, va_m)(r)) / (2 * h);
    wls = std::max(wls, rel(jac(r, c), fd));
  }

  double pf = 0.0;
  const auto op = base_operating_point(net);
  std::vector<int> pvpq, pq;
  for (const auto& b : net.buses()) {
    if (b.kind == BusKind::slack) continue;
    pvpq.push_back(b.id);
    if (b.kind == BusKind::load) pq.push_back(b.id);
  }
  const int cols = static_cast<int>(pvpq.size() + pq.size());
  for (int probe = 0; probe < 100; ++probe) {
    Vector vm, va;
    random_state(vm, va);
    const Matrix jac = powerflow_jacobian(net, vm, va);
    const int c = static_cast<int>(rng() % static_cast<std::uint64_t>(cols));
    const int r = static_cast<int>(rng() % static_cast<std::uint64_t>(cols));
    Vector vm_p = vm, vm_m = vm, va_p = va, va_m = va;
    if (c < static_cast<int>(pvpq.size())) {
      va_p(pvpq[c]) += h;
      va_m(pvpq[c]) -= h;
    } else {
      vm_p(pq[c - pvpq.size()]) += h;
      vm_m(pq[c - pvpq.size()]) -= h;
    }
    const double fd = (power_mismatch(net, op, vm_p, va_p)(r) - power_mismatch(net, op, vm_m, va_m)(r)) / (2 * h);
    pf = std::max(pf, rel(jac(r, c), fd));
  }
  const double worst = std::max({detector, wls, pf});
  return {worst < 1e-4, format("max relative error: detector %.2g, WLS %.2g, power flow %.2g (100 probes each)",
                               detector, wls, pf)};
}

Outcome attack_invariants() {
  const auto& net = test::case14();
  const auto frames = benign(net, 100, 51);
  int bad = 0, diverged = 0;
  double worst_sum = 0.0, worst_tau = 0.0;
  AttackConfig cfg;
  cfg.kind = AttackKind::lr;
  for (int k = 0; k < 10000; ++k) {
    cfg.seed = static_cast<std::uint64_t>(k);
    cfg.target_fraction = 0.1 + 0.1 * (k % 5);
    try {
      const auto a = attack_lr(net, frames[static_cast<std::size_t>(k) % frames.size()], cfg);
      const double sum = std::abs(a.delta_p.sum());
      worst_sum = std::max(worst_sum, sum);
      worst_tau = std::max(worst_tau, a.tau);
      bad += !(sum < 1e-9 && a.tau <= 0.2);
    } catch (const DivergenceError&) {
      ++diverged;
    }
  }
  return {bad == 0 && diverged == 0,
          format("%d violations, %d diverged re-solves; max |sum dP| %.2g, max tau %.4f", bad, diverged, worst_sum,
                 worst_tau)};
}

Outcome cli_determinism() {
  const auto dir = fs::temp_directory_path() / ("gridsense_accept_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto run = [&](const std::string& out) {
    const std::string cmd = "'" GRIDSENSE_CLI "' optimize --case case14 --seed 3 --pop 16 --generations 4 --out '" +
                            (dir / out).string() + "' >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  };
  auto slurp = [&](const fs::path& p) {
    std::ifstream in(dir / p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
  };
  const int a = run("a"), b = run("b");
  const auto pa = slurp("a/placements.json"), pb = slurp("b/placements.json");
  const bool same = !pa.empty() && pa == pb && slurp("a/pareto.json") == slurp("b/pareto.json");
  fs::remove_all(dir);
  return {a == 0 && b == 0 && same, format("exit codes %d/%d, champion and Pareto JSON %s", a, b,
                                           same ? "byte-identical" : "differ")};
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "physics-residual separation", 60, physics_separation},
      {2, "physics regularization helps", 1800, physics_regularization},
      {3, "NSGA-II sorting and champion rule", 60, nsga2_correctness},
      {4, "constraint oracle equivalence", 120, constraint_oracles},
      {5, "closed-loop improvement over greedy", 3600, closed_loop_improvement},
      {6, "robustness metric arithmetic", 60, robustness_arithmetic},
      {7, "WLS sanity", 600, wls_sanity},
      {8, "gradient and Jacobian checks", 120, gradient_checks},
      {9, "LR attack invariants", 60, attack_invariants},
      {10, "optimize determinism", 3600, cli_determinism},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs > c.budget_s) {
      o.pass = false;
      o.detail += format("; over the %.0f s budget", c.budget_s);
    }
    failed += !o.pass;
    std::printf("%s %d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
