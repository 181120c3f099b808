#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "gridsense/evalharness.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path& workdir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / ("gridsense_cli_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int run(const std::string& args) {
  const std::string cmd = "cd '" + workdir().string() + "' && '" GRIDSENSE_CLI "' " + args + " >cli.out 2>cli.err";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(workdir() / p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

int lines(const std::string& s) { return static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

void write(const fs::path& p, const std::string& text) { std::ofstream(workdir() / p) << text; }

// Small enough for a few seconds per command.
const char* kTinyConfig = R"({"case": "case14", "profile": {"length": 60}, "detector": {"epochs": 3}})";

}  // namespace

TEST_CASE("help exits 0 and lists the subcommands") {
  CHECK(run("--help") == 0);
  const auto help = slurp("cli.out");
  for (const char* cmd : {"simulate", "attack", "importance", "optimize", "evaluate", "psse"})
    CHECK(help.find(cmd) != std::string::npos);
  CHECK(run("optimize --help") == 0);
  const auto opt = slurp("cli.out");
  for (const char* flag : {"--pop", "--generations", "--max-sensors", "--epochs", "--seed", "--workers", "--config"})
    CHECK(opt.find(flag) != std::string::npos);
}

TEST_CASE("simulate writes one row per bus per timestamp, reproducibly") {
  REQUIRE(run("simulate case14 --length 100 --seed 4 --out a.csv") == 0);
  const auto a = slurp("a.csv");
  CHECK(lines(a) == 1401);
  CHECK(first_line(a) == "t,bus,V,I,theta,delta,P,Q,label,attack_type");
  REQUIRE(run("simulate case14 --length 100 --seed 4 --out b.csv") == 0);
  CHECK(slurp("b.csv") == a);
  REQUIRE(run("simulate case14 --length 100 --seed 5 --out c.csv") == 0);
  CHECK(slurp("c.csv") != a);

  CHECK(run("simulate no_such_case.m --length 10 --out x.csv") == 2);
  CHECK(run("simulate case14 --length 0 --out x.csv") == 2);
  CHECK(run("simulate case14 --out x.csv --bogus") == 2);
}

TEST_CASE("attack and importance subcommands") {
  REQUIRE(run("simulate case14 --length 5 --out benign.csv") == 0);
  REQUIRE(run("attack case14 --frames benign.csv --kind lr --out lr.csv") == 0);
  const auto lr = slurp("lr.csv");
  CHECK(lines(lr) == 71);
  CHECK(lr.find(",attacked,lr") != std::string::npos);
  CHECK(run("attack case14 --frames missing.csv --kind lr --out lr.csv") != 0);
  CHECK(run("attack case14 --frames benign.csv --kind nonsense --out lr.csv") == 2);

  REQUIRE(run("importance case14 --out scores.json") == 0);
  const auto j = nlohmann::json::parse(slurp("scores.json"));
  CHECK(j.dump().find("14") != std::string::npos);
}

TEST_CASE("optimize emits sorted 1-based ids and is reproducible") {
  write("tiny.json", kTinyConfig);
  CHECK(run("optimize --resume log.jsonl") == 2);
  REQUIRE(run("optimize --config tiny.json --pop 8 --generations 2 --out run1") == 0);
  const auto placements = nlohmann::json::parse(slurp("run1/placements.json"));
  const auto buses = placements.at("champion").at("buses").get<std::vector<int>>();
  REQUIRE(!buses.empty());
  CHECK(std::is_sorted(buses.begin(), buses.end()));
  CHECK(std::adjacent_find(buses.begin(), buses.end()) == buses.end());
  CHECK(buses.front() >= 1);
  CHECK(buses.back() <= 14);
  CHECK(lines(slurp("run1/log.jsonl")) >= 3);
  CHECK(fs::exists(workdir() / "run1/config.json"));

  REQUIRE(run("optimize --config tiny.json --pop 8 --generations 2 --out run2") == 0);
  CHECK(slurp("run1/placements.json") == slurp("run2/placements.json"));
  CHECK(slurp("run1/pareto.json") == slurp("run2/pareto.json"));

  write("broken.json", R"({"ga": {"n_pop": -3}})");
  CHECK(run("optimize --config broken.json --out bad") == 2);
  write("typo.json", R"({"detectr": {}})");
  CHECK(run("optimize --config typo.json --out bad") == 2);
}

TEST_CASE("evaluate with and without placements") {
  write("tiny.json", kTinyConfig);
  REQUIRE(run("evaluate --config tiny.json --trials 2 --no-greedy --out base") == 0);
  const auto metrics = slurp("base/metrics.csv");
  CHECK(first_line(metrics) == gridsense::kMetricsHeader);
  CHECK(lines(metrics) == 2);
  CHECK(first_line(slurp("base/robustness.csv")) == gridsense::kRobustnessHeader);

  write("external.json", R"({"name": "published", "buses": [2, 6, 7, 9]})");
  write("bare.json", "[1, 4, 10, 13]");
  REQUIRE(run("evaluate --config tiny.json --trials 2 --genome external.json --genome mine=bare.json --out ext") == 0);
  const auto ext = slurp("ext/metrics.csv");
  CHECK(lines(ext) == 5);
  CHECK(ext.find("\npublished,4,2 6 7 9,") != std::string::npos);
  CHECK(ext.find("\nmine,4,1 4 10 13,") != std::string::npos);
  CHECK(ext.find("\ngreedy,") != std::string::npos);
  const auto cmp = nlohmann::json::parse(slurp("ext/comparison.json"));
  CHECK(cmp.at("metadata").contains("f_crit"));
  CHECK(cmp.at("methods").size() == 4);

  CHECK(run("evaluate --config tiny.json --placement nowhere.json --out none") == 5);
  write("garbage.json", "{not json");
  CHECK(run("evaluate --config tiny.json --placement garbage.json --out none") == 2);
}

TEST_CASE("psse reports both layouts") {
  write("full.json", "[1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14]");
  REQUIRE(run("psse case14 --placement full.json --frames 5 --out psse.csv") == 0);
  const auto csv = slurp("psse.csv");
  CHECK(first_line(csv) == "t,vm_err_baseline,va_err_baseline,vm_err_placement,va_err_placement");
  CHECK(lines(csv) == 6);
  CHECK(slurp("cli.out").find("reduction") != std::string::npos);
  CHECK(run("psse case14 --placement nowhere.json") == 5);
}
