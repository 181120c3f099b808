#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "gridsense/frames.hpp"
#include "gridsense/netmodel.hpp"
#include "gridsense/powerflow.hpp"

namespace gridsense {

enum class AttackKind { random, general, lr };

struct AttackConfig {
  AttackKind kind = AttackKind::random;
  double alpha = 0.1;            // perturbation / magnitude factor
  double target_fraction = 0.3;  // share of eligible buses attacked
  double tau_max = 0.2;          // LR load-shift bound
  std::uint64_t seed = 0;
  /// Channels perturbed by random/general attacks; P and Q by default.
  std::array<bool, kChannels> channels = {false, false, false, false, true, true};

  void validate() const;
};

/// Number of targets: round(fraction * eligible), error when it rounds to 0.
int target_count(double fraction, int eligible);

/// Buses eligible for random/general attacks: those reading above 1e-9 p.u.
/// on at least one attacked channel. round(fraction * N) of them are targeted.
std::vector<int> injection_buses(const MeasurementFrame& frame, const AttackConfig& config);

/// Z_s = (1 + alpha) Z_b on the attacked channels of the targeted buses.
MeasurementFrame attack_random(const MeasurementFrame& frame, const AttackConfig& config);

/// Per (bus, channel) max - min over a benign history.
FrameMatrix channel_range(std::span<const MeasurementFrame> history);

/// One general-attack reading: z + (-1)^beta alpha gamma range.
inline double general_perturbation(double z, double range, double alpha, int beta, double gamma) {
  return z + (beta % 2 == 0 ? 1.0 : -1.0) * alpha * gamma * range;
}

/// Z_s = Z_b + (-1)^beta alpha gamma Range(Z_b) with beta ~ Bernoulli(0.5),
/// gamma ~ U(0, 1) drawn per (bus, channel).
MeasurementFrame attack_general(const MeasurementFrame& frame, const FrameMatrix& range,
                                const AttackConfig& config);

struct LrAttack {
  MeasurementFrame frame;   // re-solved, physically consistent
  std::vector<int> targets; // load buses
  Vector delta_p;           // load change per target (sums to zero)
  double tau = 0.0;         // max |delta_p / P_b|
};

/// Zero-sum load redistribution over targeted load buses. True loads are read
/// from the frame (P_b = -P at load buses); Q follows P to keep each bus power
/// factor; the falsified loads are re-solved through the power flow.
LrAttack attack_lr(const PowerNetwork& net, const MeasurementFrame& frame, const AttackConfig& config,
                   const PowerFlowOptions& pf = {});

/// Load shift of a redistribution: max_i |delta_i / base_i|.
double load_shift(std::span<const double> delta, std::span<const double> base);

/// The delta_p draw used by attack_lr: Gaussian, mean-removed, rescaled so
/// the load shift is uniform in [tau_max/2, tau_max].
Vector sample_lr_deltas(std::span<const double> base_loads, double tau_max, Rng& rng);

}  // namespace gridsense
