#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridsense/netmodel.hpp"
#include "gridsense/powerflow.hpp"

namespace gridsense::test {

inline const PowerNetwork& bundled(const std::string& name) {
  static std::map<std::string, PowerNetwork> cache;
  auto it = cache.find(name);
  if (it == cache.end()) it = cache.emplace(name, parse_case(bundled_case_path(name))).first;
  return it->second;
}

inline const PowerNetwork& case14() { return bundled("case14"); }

/// Graph-only network: bus 0 is the slack, every other bus a small load,
/// unit-reactance lines along `edges`.
inline PowerNetwork graph_network(int n, const std::vector<std::pair<int, int>>& edges) {
  std::vector<Bus> buses(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    buses[i].id = i;
    buses[i].external_id = i + 1;
    buses[i].kind = i == 0 ? BusKind::slack : BusKind::load;
    buses[i].base_load_p = i == 0 ? 0.0 : 0.1;
    buses[i].gen_capacity = i == 0 ? 1.0 : 0.0;
  }
  std::vector<Branch> branches;
  for (auto [u, v] : edges) branches.push_back(Branch{u, v, 0.0, 0.1, 0.0, 1.0, 0.0});
  return PowerNetwork::build("graph", 100.0, buses, branches);
}

inline std::vector<std::pair<int, int>> path_edges(int n) {
  std::vector<std::pair<int, int>> e;
  for (int i = 0; i + 1 < n; ++i) e.emplace_back(i, i + 1);
  return e;
}

inline std::vector<std::pair<int, int>> complete_edges(int n) {
  std::vector<std::pair<int, int>> e;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) e.emplace_back(i, j);
  return e;
}

inline const nlohmann::json& reference() {
  static const nlohmann::json j = [] {
    std::ifstream in(std::string(GRIDSENSE_TEST_FIXTURES) + "/reference.json");
    return nlohmann::json::parse(in);
  }();
  return j;
}

inline double rel_error(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

inline MeasurementFrame base_frame(const PowerNetwork& net) {
  const auto sol = solve_powerflow(net, base_operating_point(net));
  return extract_frame(net, sol.vm, sol.va, 0);
}

}  // namespace gridsense::test
