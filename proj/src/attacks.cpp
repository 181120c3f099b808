#include "gridsense/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

namespace gridsense {

namespace {

// Readings at or below this magnitude (p.u.) are solver roundoff on
// zero-injection buses, not measurements worth falsifying.
constexpr double kZeroReading = 1e-9;

std::vector<int> sample_targets(std::vector<int> pool, int count, Rng& rng) {
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(static_cast<std::size_t>(count));
  std::sort(pool.begin(), pool.end());
  return pool;
}

int attack_count(const AttackConfig& config, int n_buses, std::size_t pool) {
  return std::min(target_count(config.target_fraction, n_buses), static_cast<int>(pool));
}

}  // namespace

void AttackConfig::validate() const {
  if (!(target_fraction > 0.0 && target_fraction <= 1.0))
    throw ConfigError("target_fraction must lie in (0, 1]");
  if (!(tau_max > 0.0 && tau_max <= 1.0)) throw ConfigError("tau_max must lie in (0, 1]");
  if (alpha < 0.0) throw ConfigError("alpha must be non-negative");
}

int target_count(double fraction, int eligible) {
  const int count = static_cast<int>(std::lround(fraction * eligible));
  if (count < 1) throw ConfigError("target fraction selects no buses");
  return std::min(count, eligible);
}

std::vector<int> injection_buses(const MeasurementFrame& frame, const AttackConfig& config) {
  std::vector<int> out;
  for (int i = 0; i < frame.buses(); ++i) {
    for (int c = 0; c < kChannels; ++c) {
      if (config.channels[c] && std::abs(frame.values(i, c)) > kZeroReading) {
        out.push_back(i);
        break;
      }
    }
  }
  return out;
}

MeasurementFrame attack_random(const MeasurementFrame& frame, const AttackConfig& config) {
  config.validate();
  if (config.alpha == 0.0) std::clog << "warning: random attack with alpha = 0 leaves readings unchanged\n";
  const auto pool = injection_buses(frame, config);
  Rng rng(derive_seed(config.seed, 0x72616e64));
  const auto targets = sample_targets(pool, attack_count(config, frame.buses(), pool.size()), rng);
  MeasurementFrame out = frame;
  for (int i : targets)
    for (int c = 0; c < kChannels; ++c)
      if (config.channels[c]) out.values(i, c) = (1.0 + config.alpha) * frame.values(i, c);
  out.label = Label::attacked;
  out.attack_type = AttackType::random;
  return out;
}

FrameMatrix channel_range(std::span<const MeasurementFrame> history) {
  if (history.empty()) throw ValidationError("empty benign history");
  FrameMatrix lo = history.front().values, hi = history.front().values;
  for (const auto& f : history) {
    if (f.values.rows() != lo.rows()) throw ValidationError("history frames differ in size");
    lo = lo.cwiseMin(f.values);
    hi = hi.cwiseMax(f.values);
  }
  return hi - lo;
}

MeasurementFrame attack_general(const MeasurementFrame& frame, const FrameMatrix& range,
                                const AttackConfig& config) {
  config.validate();
  if (range.rows() != frame.values.rows()) throw ValidationError("range does not match frame size");
  const auto pool = injection_buses(frame, config);
  Rng rng(derive_seed(config.seed, 0x67656e));
  const auto targets = sample_targets(pool, attack_count(config, frame.buses(), pool.size()), rng);
  MeasurementFrame out = frame;
  for (int i : targets) {
    for (int c = 0; c < kChannels; ++c) {
      if (!config.channels[c]) continue;
      const int beta = uniform01(rng) < 0.5 ? 0 : 1;
      const double gamma = uniform01(rng);
      out.values(i, c) = general_perturbation(frame.values(i, c), range(i, c), config.alpha, beta, gamma);
    }
  }
  out.label = Label::attacked;
  out.attack_type = AttackType::general;
  return out;
}

double load_shift(std::span<const double> delta, std::span<const double> base) {
  double tau = 0.0;
  for (std::size_t i = 0; i < delta.size(); ++i)
    if (base[i] != 0.0) tau = std::max(tau, std::abs(delta[i] / base[i]));
  return tau;
}

Vector sample_lr_deltas(std::span<const double> base_loads, double tau_max, Rng& rng) {
  const auto n = static_cast<Eigen::Index>(base_loads.size());
  if (n < 2) throw ValidationError("LR attack needs at least two target loads");
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector g(n);
  for (Eigen::Index i = 0; i < n; ++i) g(i) = normal(rng) * base_loads[i];
  g.array() -= g.mean();
  const double raw = load_shift({g.data(), static_cast<std::size_t>(n)}, base_loads);
  if (raw == 0.0) return Vector::Zero(n);
  const double target = tau_max * (0.5 + 0.5 * uniform01(rng));
  g *= target / raw;
  // Rescaling can overshoot the bound by an ulp; pull back if it does.
  while (load_shift({g.data(), static_cast<std::size_t>(n)}, base_loads) > tau_max) g *= 1.0 - 1e-15;
  return g;
}

LrAttack attack_lr(const PowerNetwork& net, const MeasurementFrame& frame, const AttackConfig& config,
                   const PowerFlowOptions& pf) {
  config.validate();
  std::vector<int> pool;
  for (int i : net.buses_of_kind(BusKind::load))
    if (-frame(i, Channel::P) > kZeroReading) pool.push_back(i);
  if (pool.size() < 2) throw ValidationError("LR attack needs at least two loaded buses");
  Rng rng(derive_seed(config.seed, 0x6c72));
  const int count = std::max(2, target_count(config.target_fraction, static_cast<int>(pool.size())));
  LrAttack attack;
  attack.targets = sample_targets(pool, count, rng);
  std::vector<double> base;
  for (int i : attack.targets) base.push_back(-frame(i, Channel::P));
  attack.delta_p = sample_lr_deltas(base, config.tau_max, rng);
  attack.tau = load_shift({attack.delta_p.data(), base.size()}, base);

  OperatingPoint op = operating_point_from_frame(net, frame);
  for (std::size_t k = 0; k < attack.targets.size(); ++k) {
    const int i = attack.targets[k];
    const double ratio = attack.delta_p(static_cast<Eigen::Index>(k)) / base[k];
    op.load_p(i) += attack.delta_p(static_cast<Eigen::Index>(k));
    op.load_q(i) *= 1.0 + ratio;
  }
  const auto sol = solve_powerflow(net, op, pf);
  attack.frame = extract_frame(net, sol.vm, sol.va, frame.t);
  attack.frame.label = Label::attacked;
  attack.frame.attack_type = AttackType::lr;
  return attack;
}

}  // namespace gridsense
