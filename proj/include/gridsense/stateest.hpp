#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "gridsense/frames.hpp"
#include "gridsense/netmodel.hpp"
#include "gridsense/placement.hpp"

namespace gridsense {

enum class MeasurementType { vmag, vangle, pinj, qinj };

std::string_view to_string(MeasurementType type);

struct Measurement {
  MeasurementType type = MeasurementType::vmag;
  int bus = 0;
  double value = 0.0;
  double variance = 1e-4;
};

struct MeasurementSet {
  std::vector<Measurement> rows;

  std::size_t size() const noexcept { return rows.size(); }
};

struct MeasurementConfig {
  double variance = 1e-4;      // metered sigma^2
  double pseudo_factor = 10.0;  // load-bus pseudo-measurement variance multiplier
};

/// Baseline rows per bus role (slack |V|, angle, P; generator |V|, P; load
/// pseudo P, Q) followed by |V|, angle, P, Q for every placed sensor.
MeasurementSet build_measurement_set(const PowerNetwork& net, const MeasurementFrame& frame,
                                     const PlacementGenome& genome, const MeasurementConfig& config = {});

/// Adds N(0, sigma^2) to every row. The draw for the k-th row of a given
/// (type, bus) depends only on (seed, t, type, bus, k), so nested sets share
/// the noise on their common rows.
MeasurementSet add_noise(const MeasurementSet& set, double sigma, std::uint64_t seed, int t);

/// State x = [va of non-slack buses; vm of all buses].
Vector measurement_function(const PowerNetwork& net, const MeasurementSet& set, const Vector& vm,
                            const Vector& va);
Matrix measurement_jacobian(const PowerNetwork& net, const MeasurementSet& set, const Vector& vm,
                            const Vector& va);
/// H' W H at the given state.
Matrix gain_matrix(const PowerNetwork& net, const MeasurementSet& set, const Vector& vm, const Vector& va);

struct WlsOptions {
  int max_iterations = 25;
  double tolerance = 1e-8;  // on max |dx|
};

struct StateEstimate {
  Vector vm;
  Vector va;  // slack fixed at 0
  bool converged = false;
  int iterations = 0;
  double residual_norm = 0.0;        // ||z - h(x)||_2 at the final state
  std::vector<double> objective;     // J(x) = r' W r before each step and at the end
};

/// Gauss-Newton WLS from a flat start. Throws UnobservableError when the gain
/// matrix is numerically singular.
StateEstimate wls_estimate(const PowerNetwork& net, const MeasurementSet& set, const WlsOptions& options = {});

struct PsseConfig {
  MeasurementConfig measurement;
  WlsOptions wls;
  double noise_sigma = 0.01;
  std::uint64_t seed = 1;
  Exec exec = Exec::parallel;
};

struct FrameError {
  int t = 0;
  double vm = 0.0;  // mean |Vm_est - Vm_true|
  double va = 0.0;  // mean |Va_est - Va_true|, radians
  bool converged = true;
};

struct PsseComparison {
  std::vector<FrameError> a;
  std::vector<FrameError> b;
  double mean_vm_a = 0.0, mean_va_a = 0.0;
  double mean_vm_b = 0.0, mean_va_b = 0.0;
  double improvement_vm = 0.0;  // percent reduction of b vs a
  double improvement_va = 0.0;
};

/// Per-frame estimation errors against the frame's own state under both
/// layouts, with paired noise.
std::vector<FrameError> psse_errors(const PowerNetwork& net, std::span<const MeasurementFrame> frames,
                                    const PlacementGenome& genome, const PsseConfig& config = {});
PsseComparison psse_improvement(const PowerNetwork& net, std::span<const MeasurementFrame> frames,
                                const PlacementGenome& genome_a, const PlacementGenome& genome_b,
                                const PsseConfig& config = {});

}  // namespace gridsense
