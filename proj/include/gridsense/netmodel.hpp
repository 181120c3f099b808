#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "gridsense/common.hpp"
#include "gridsense/graph.hpp"

namespace gridsense {

enum class BusKind { slack, generator, load };

std::string_view to_string(BusKind kind);

/// Bus quantities are per-unit on the network MVA base.
struct Bus {
  int id = 0;           // contiguous index from 0
  int external_id = 0;  // id as written in the case file
  BusKind kind = BusKind::load;
  double base_load_p = 0.0;
  double base_load_q = 0.0;
  double gen_p = 0.0;             // scheduled active generation
  double gen_capacity = 0.0;      // W_i for generators, 0 otherwise
  double voltage_setpoint = 1.0;  // generators and slack
  double shunt_g = 0.0;
  double shunt_b = 0.0;

  bool operator==(const Bus&) const = default;
};

struct Branch {
  int from = 0;
  int to = 0;
  double r = 0.0;
  double x = 0.0;
  double b_shunt = 0.0;  // total line charging
  double tap = 1.0;
  double shift_deg = 0.0;

  bool operator==(const Branch&) const = default;
};

/// Immutable power system model. Construction validates the bus/branch data
/// and assembles topology, Ybus and Zbus once.
class PowerNetwork {
 public:
  static PowerNetwork build(std::string name, double base_mva, std::vector<Bus> buses,
                            std::vector<Branch> branches);

  const std::string& name() const noexcept { return name_; }
  double base_mva() const noexcept { return base_mva_; }
  int size() const noexcept { return static_cast<int>(buses_.size()); }
  const std::vector<Bus>& buses() const noexcept { return buses_; }
  const Bus& bus(int i) const { return buses_.at(static_cast<std::size_t>(i)); }
  const std::vector<Branch>& branches() const noexcept { return branches_; }
  int slack() const noexcept { return slack_; }

  const AdjacencyList& neighbors() const noexcept { return neighbors_; }
  bool adjacent(int u, int v) const;
  /// Dense symmetric boolean adjacency, row-major N*N.
  const std::vector<std::uint8_t>& adjacency() const noexcept { return adjacency_; }
  const std::vector<int>& components() const noexcept { return components_; }

  const CMatrix& ybus() const noexcept { return ybus_; }
  const CMatrix& zbus() const noexcept { return zbus_; }
  /// True when Zbus is the Moore-Penrose pseudo-inverse of a singular Ybus.
  bool zbus_is_pseudo_inverse() const noexcept { return zbus_pinv_; }

  std::vector<int> buses_of_kind(BusKind kind) const;

  bool operator==(const PowerNetwork& other) const {
    return name_ == other.name_ && base_mva_ == other.base_mva_ &&
           buses_ == other.buses_ && branches_ == other.branches_;
  }

 private:
  std::string name_;
  double base_mva_ = 100.0;
  std::vector<Bus> buses_;
  std::vector<Branch> branches_;
  int slack_ = -1;
  AdjacencyList neighbors_;
  std::vector<std::uint8_t> adjacency_;
  std::vector<int> components_;
  CMatrix ybus_;
  CMatrix zbus_;
  bool zbus_pinv_ = false;
};

PowerNetwork parse_case(const std::filesystem::path& path);
/// `origin` is used in error messages only.
PowerNetwork parse_case_text(std::string_view text, std::string_view origin = "<memory>");
/// Serializes in the case format; parse_case_text(write_case(n)) == n.
std::string write_case(const PowerNetwork& net);

/// Standard bus admittance assembly: pi-model branches with off-nominal tap
/// and phase shift on the from side, plus bus shunts.
CMatrix build_ybus(int n_buses, const std::vector<Branch>& branches, const std::vector<Bus>& buses);
/// Exact inverse when Ybus is nonsingular, pseudo-inverse otherwise.
/// `pseudo` (optional) reports which route was taken.
CMatrix build_zbus(const CMatrix& ybus, bool* pseudo = nullptr);

/// Directory holding bundled cases, resolved from GRIDSENSE_DATA_DIR or the
/// compile-time default.
std::filesystem::path bundled_case_path(std::string_view name);

}  // namespace gridsense
