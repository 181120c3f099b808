// Serial vs parallel timings for every OpenMP kernel, with a check that both
// paths agree. Usage: bench_kernels [repeats]

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <string>
#include <vector>

#include "gridsense/experiment.hpp"

using namespace gridsense;

namespace {

double median_ms(int repeats, const std::function<void()>& fn) {
  std::vector<double> t;
  for (int r = 0; r < repeats; ++r) {
    const auto start = std::chrono::steady_clock::now();
    fn();
    t.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count());
  }
  std::sort(t.begin(), t.end());
  return t[t.size() / 2];
}

template <typename Result>
void row(const char* name, int repeats, const std::function<Result(Exec)>& kernel,
         const std::function<bool(const Result&, const Result&)>& same) {
  Result serial, parallel;
  const double ts = median_ms(repeats, [&] { serial = kernel(Exec::serial); });
  const double tp = median_ms(repeats, [&] { parallel = kernel(Exec::parallel); });
  std::printf("%-28s %10.2f %10.2f %8.2fx  %s\n", name, ts, tp, ts / tp, same(serial, parallel) ? "match" : "MISMATCH");
}

bool same_vector(const Vector& a, const Vector& b) { return a.size() == b.size() && (a - b).cwiseAbs().maxCoeff() <= 1e-12; }

}  // namespace

int main(int argc, char** argv) {
  const int repeats = argc > 1 ? std::max(1, std::atoi(argv[1])) : 3;
  std::printf("workers: %d, repeats: %d\n", worker_count(), repeats);
  std::printf("%-28s %10s %10s %9s\n", "kernel", "serial ms", "parallel ms", "speedup");

  const auto case200 = load_network("case200");
  const auto case118 = load_network("case118");
  const auto case14 = load_network("case14");

  row<Vector>("betweenness case200", repeats, [&](Exec e) { return betweenness(case200, e); }, same_vector);
  row<Vector>("electrical betweenness 118", repeats, [&](Exec e) { return electrical_betweenness(case118, e); },
              same_vector);

  ProfileConfig pc;
  pc.length = 48;
  const auto profile = make_load_profile(case118, pc);
  row<Dataset>("power-flow dataset case118", repeats, [&](Exec e) { return generate_dataset(case118, profile, e); },
               [](const Dataset& a, const Dataset& b) { return a.frames == b.frames && a.skipped == b.skipped; });

  pc.length = 100;
  const auto frames14 = generate_dataset(case14, make_load_profile(case14, pc)).frames;
  const auto layout = PlacementGenome::from_bus_numbers(14, std::vector<int>{2, 4, 6, 9, 13});
  row<std::vector<FrameError>>(
      "WLS state estimation case14", repeats,
      [&](Exec e) {
        PsseConfig cfg;
        cfg.exec = e;
        return psse_errors(case14, frames14, layout, cfg);
      },
      [](const auto& a, const auto& b) {
        if (a.size() != b.size()) return false;
        for (std::size_t k = 0; k < a.size(); ++k)
          if (a[k].vm != b[k].vm || a[k].va != b[k].va) return false;
        return true;
      });

  DetectorModel model(case14, 2, 32, 1);
  model.fit_normalization(frames14);
  row<RobustnessReport>(
      "failure stress test case14", repeats,
      [&](Exec e) {
        RobustnessConfig rc;
        rc.exec = e;
        rc.trials = 10;
        return robustness_report(case14, model, layout, frames14, rc);
      },
      [](const RobustnessReport& a, const RobustnessReport& b) { return a.r == b.r && a.a_f1 == b.a_f1; });

  // Constraint-only evaluator: isolates the GA loop from detector training.
  const PlacementProblem problem(case118, {}, Vector::Ones(case118.size()));
  const auto scores = importance_scores(case118).score;
  GaConfig ga;
  ga.n_pop = 40;
  ga.generations = 30;
  ga.max_sensors = 35;
  row<EvolveResult>(
      "NSGA-II loop case118", repeats,
      [&](Exec e) {
        EvolveOptions options;
        options.exec = e;
        return evolve(
            case118, scores,
            [&](const PlacementGenome& g) { return Fitness{problem.evaluate(g).total, g.popcount(), 0.0, false}; }, ga,
            options);
      },
      [](const EvolveResult& a, const EvolveResult& b) { return a.champion.genome == b.champion.genome; });
  return 0;
}
