#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "gridsense/frames.hpp"
#include "gridsense/netmodel.hpp"

namespace gridsense {

/// Per-bus operating conditions (per-unit). Net scheduled injection is
/// gen_p - load_p and -load_q; v_setpoint applies to slack and generators.
struct OperatingPoint {
  Vector load_p;
  Vector load_q;
  Vector gen_p;
  Vector v_setpoint;
};

OperatingPoint base_operating_point(const PowerNetwork& net);

/// Rebuilds the operating point whose solution reproduces `frame`: measured
/// injections become the schedule and measured |V| the setpoints.
OperatingPoint operating_point_from_frame(const PowerNetwork& net, const MeasurementFrame& frame);

struct PowerFlowOptions {
  int max_iterations = 20;
  double tolerance = 1e-8;
};

struct PowerFlowSolution {
  Vector vm;
  Vector va;  // radians, slack at 0
  int iterations = 0;
  double mismatch = 0.0;  // infinity norm, p.u.
};

/// Newton-Raphson in polar coordinates from a flat start. Throws
/// DivergenceError carrying the final mismatch when it does not converge.
PowerFlowSolution solve_powerflow(const PowerNetwork& net, const OperatingPoint& op,
                                  const PowerFlowOptions& options = {});

/// Mismatch [dP(pv,pq); dQ(pq)] and its Jacobian w.r.t. [va(pv,pq); vm(pq)].
/// Exposed for finite-difference checks.
Vector power_mismatch(const PowerNetwork& net, const OperatingPoint& op, const Vector& vm,
                      const Vector& va);
Matrix powerflow_jacobian(const PowerNetwork& net, const Vector& vm, const Vector& va);

/// Complex injections S = V conj(Ybus V) and their dense partial derivatives
/// w.r.t. all bus angles and magnitudes.
struct PowerDerivatives {
  CVector s;
  CMatrix ds_dva;
  CMatrix ds_dvm;
};
PowerDerivatives power_derivatives(const PowerNetwork& net, const Vector& vm, const Vector& va);

/// Per-bus [V, I, theta, delta, P, Q] from a solved state; I = Ybus V and
/// S = V conj(I). delta is 0 where the injection current is exactly zero.
MeasurementFrame extract_frame(const PowerNetwork& net, const Vector& vm, const Vector& va, int t);

struct ProfileConfig {
  int length = 200;
  double low = 0.8;
  double high = 1.2;
  double daily_amplitude = 0.1;
  int period = 24;
  double noise = 0.05;  // half-width of the per-bus uniform noise
  std::uint64_t seed = 1;
};

/// Multiplier per (timestamp, bus) applied to base loads:
/// clamp(1 + A sin(2 pi t / period) + U(-noise, noise), low, high).
struct LoadProfile {
  ProfileConfig config;
  Matrix multipliers;  // length x N

  int length() const noexcept { return static_cast<int>(multipliers.rows()); }
};

LoadProfile make_load_profile(const PowerNetwork& net, const ProfileConfig& config);
/// Loads scaled per bus; generator dispatch follows the total load ratio.
OperatingPoint operating_point_at(const PowerNetwork& net, const LoadProfile& profile, int t);

struct Dataset {
  std::vector<MeasurementFrame> frames;
  std::vector<int> skipped;  // timestamps whose power flow did not converge
};

/// One benign frame per converged timestamp. Timestamps are independent, so
/// the parallel path returns exactly the serial result.
Dataset generate_dataset(const PowerNetwork& net, const LoadProfile& profile,
                         Exec exec = Exec::parallel, const PowerFlowOptions& options = {});

}  // namespace gridsense
