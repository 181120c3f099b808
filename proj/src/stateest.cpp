#include "gridsense/stateest.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

#include "gridsense/powerflow.hpp"

namespace gridsense {

std::string_view to_string(MeasurementType type) {
  switch (type) {
    case MeasurementType::vmag: return "vmag";
    case MeasurementType::vangle: return "vangle";
    case MeasurementType::pinj: return "pinj";
    case MeasurementType::qinj: return "qinj";
  }
  return "?";
}

MeasurementSet build_measurement_set(const PowerNetwork& net, const MeasurementFrame& frame,
                                     const PlacementGenome& genome, const MeasurementConfig& config) {
  if (frame.buses() != net.size() || genome.size() != net.size())
    throw ValidationError("frame or genome size does not match the network");
  if (!(config.variance > 0.0) || !(config.pseudo_factor > 0.0))
    throw ConfigError("measurement variances must be positive");
  MeasurementSet set;
  const double metered = config.variance, pseudo = config.variance * config.pseudo_factor;
  auto add = [&](MeasurementType type, int bus, double variance) {
    double value = 0.0;
    switch (type) {
      case MeasurementType::vmag: value = frame(bus, Channel::V); break;
      case MeasurementType::vangle: value = frame(bus, Channel::theta); break;
      case MeasurementType::pinj: value = frame(bus, Channel::P); break;
      case MeasurementType::qinj: value = frame(bus, Channel::Q); break;
    }
    set.rows.push_back({type, bus, value, variance});
  };
  for (const auto& b : net.buses()) {
    switch (b.kind) {
      case BusKind::slack:
        add(MeasurementType::vmag, b.id, metered);
        add(MeasurementType::vangle, b.id, metered);
        add(MeasurementType::pinj, b.id, metered);
        break;
      case BusKind::generator:
        add(MeasurementType::vmag, b.id, metered);
        add(MeasurementType::pinj, b.id, metered);
        break;
      case BusKind::load:
        add(MeasurementType::pinj, b.id, pseudo);
        add(MeasurementType::qinj, b.id, pseudo);
        break;
    }
  }
  for (int i = 0; i < net.size(); ++i) {
    if (!genome[i]) continue;
    add(MeasurementType::vmag, i, metered);
    add(MeasurementType::vangle, i, metered);
    add(MeasurementType::pinj, i, metered);
    add(MeasurementType::qinj, i, metered);
  }
  return set;
}

MeasurementSet add_noise(const MeasurementSet& set, double sigma, std::uint64_t seed, int t) {
  MeasurementSet out = set;
  std::map<std::pair<int, int>, int> seen;
  for (auto& m : out.rows) {
    const int k = seen[{static_cast<int>(m.type), m.bus}]++;
    Rng rng = make_rng(derive_seed(seed, static_cast<std::uint64_t>(t)),
                       static_cast<std::uint64_t>(m.type) * 1000003ULL + static_cast<std::uint64_t>(m.bus),
                       static_cast<std::uint64_t>(k));
    std::normal_distribution<double> normal(0.0, sigma);
    m.value += normal(rng);
  }
  return out;
}

namespace {

// Column of each bus angle in the state vector (-1 for the slack).
std::vector<int> angle_columns(const PowerNetwork& net) {
  std::vector<int> col(net.size(), -1);
  int k = 0;
  for (int i = 0; i < net.size(); ++i)
    if (i != net.slack()) col[i] = k++;
  return col;
}

}  // namespace

Vector measurement_function(const PowerNetwork& net, const MeasurementSet& set, const Vector& vm,
                            const Vector& va) {
  const auto d = power_derivatives(net, vm, va);
  Vector h(static_cast<Eigen::Index>(set.size()));
  for (std::size_t r = 0; r < set.size(); ++r) {
    const auto& m = set.rows[r];
    switch (m.type) {
      case MeasurementType::vmag: h(r) = vm(m.bus); break;
      case MeasurementType::vangle: h(r) = va(m.bus); break;
      case MeasurementType::pinj: h(r) = d.s(m.bus).real(); break;
      case MeasurementType::qinj: h(r) = d.s(m.bus).imag(); break;
    }
  }
  return h;
}

Matrix measurement_jacobian(const PowerNetwork& net, const MeasurementSet& set, const Vector& vm,
                            const Vector& va) {
  const int n = net.size();
  const auto col = angle_columns(net);
  const auto d = power_derivatives(net, vm, va);
  Matrix jac = Matrix::Zero(static_cast<Eigen::Index>(set.size()), 2 * n - 1);
  for (std::size_t r = 0; r < set.size(); ++r) {
    const auto& m = set.rows[r];
    const auto row = static_cast<Eigen::Index>(r);
    switch (m.type) {
      case MeasurementType::vmag: jac(row, n - 1 + m.bus) = 1.0; break;
      case MeasurementType::vangle:
        if (col[m.bus] >= 0) jac(row, col[m.bus]) = 1.0;
        break;
      case MeasurementType::pinj:
      case MeasurementType::qinj: {
        const bool p = m.type == MeasurementType::pinj;
        for (int j = 0; j < n; ++j) {
          const auto da = d.ds_dva(m.bus, j), dm = d.ds_dvm(m.bus, j);
          if (col[j] >= 0) jac(row, col[j]) = p ? da.real() : da.imag();
          jac(row, n - 1 + j) = p ? dm.real() : dm.imag();
        }
        break;
      }
    }
  }
  return jac;
}

Matrix gain_matrix(const PowerNetwork& net, const MeasurementSet& set, const Vector& vm, const Vector& va) {
  const Matrix h = measurement_jacobian(net, set, vm, va);
  Vector w(static_cast<Eigen::Index>(set.size()));
  for (std::size_t r = 0; r < set.size(); ++r) w(r) = 1.0 / set.rows[r].variance;
  return h.transpose() * w.asDiagonal() * h;
}

StateEstimate wls_estimate(const PowerNetwork& net, const MeasurementSet& set, const WlsOptions& options) {
  const int n = net.size();
  const auto col = angle_columns(net);
  Vector z(static_cast<Eigen::Index>(set.size())), w(z.size());
  for (std::size_t r = 0; r < set.size(); ++r) {
    if (!(set.rows[r].variance > 0.0)) throw ValidationError("measurement variance must be positive");
    z(r) = set.rows[r].value;
    w(r) = 1.0 / set.rows[r].variance;
  }
  StateEstimate est;
  est.vm = Vector::Ones(n);
  est.va = Vector::Zero(n);
  if (set.size() < static_cast<std::size_t>(2 * n - 1))
    throw UnobservableError("fewer measurements than state variables");
  while (true) {
    const Vector r = z - measurement_function(net, set, est.vm, est.va);
    est.residual_norm = r.norm();
    est.objective.push_back(r.dot(w.cwiseProduct(r)));
    if (est.converged || est.iterations >= options.max_iterations) break;
    const Matrix h = measurement_jacobian(net, set, est.vm, est.va);
    const Matrix gain = h.transpose() * w.asDiagonal() * h;
    Eigen::LLT<Matrix> llt(gain);
    if (llt.info() != Eigen::Success || llt.rcond() < 1e-13)
      throw UnobservableError("gain matrix is singular: measurement set is not observable");
    const Vector dx = llt.solve(h.transpose() * w.cwiseProduct(r));
    for (int i = 0; i < n; ++i) {
      if (col[i] >= 0) est.va(i) += dx(col[i]);
      est.vm(i) += dx(n - 1 + i);
    }
    ++est.iterations;
    if (!dx.allFinite()) break;
    if (dx.lpNorm<Eigen::Infinity>() < options.tolerance) est.converged = true;
  }
  return est;
}

std::vector<FrameError> psse_errors(const PowerNetwork& net, std::span<const MeasurementFrame> frames,
                                    const PlacementGenome& genome, const PsseConfig& config) {
  std::vector<FrameError> out(frames.size());
  std::vector<std::string> errors(frames.size());
  const int count = static_cast<int>(frames.size());
  auto run = [&](int k) {
    const auto& f = frames[k];
    try {
      const auto set = add_noise(build_measurement_set(net, f, genome, config.measurement), config.noise_sigma,
                                 config.seed, f.t);
      const auto est = wls_estimate(net, set, config.wls);
      FrameError e{f.t, 0.0, 0.0, est.converged};
      for (int i = 0; i < net.size(); ++i) {
        e.vm += std::abs(est.vm(i) - f(i, Channel::V));
        e.va += std::abs(est.va(i) - f(i, Channel::theta));
      }
      e.vm /= net.size();
      e.va /= net.size();
      out[k] = e;
    } catch (const std::exception& ex) {
      errors[k] = ex.what();
    }
  };
  if (config.exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic) num_threads(worker_count())
    for (int k = 0; k < count; ++k) run(k);
  } else {
    for (int k = 0; k < count; ++k) run(k);
  }
  for (int k = 0; k < count; ++k)
    if (!errors[k].empty()) throw UnobservableError("frame t=" + std::to_string(frames[k].t) + ": " + errors[k]);
  return out;
}

PsseComparison psse_improvement(const PowerNetwork& net, std::span<const MeasurementFrame> frames,
                                const PlacementGenome& genome_a, const PlacementGenome& genome_b,
                                const PsseConfig& config) {
  if (frames.empty()) throw ValidationError("no frames to estimate");
  PsseComparison c;
  c.a = psse_errors(net, frames, genome_a, config);
  c.b = psse_errors(net, frames, genome_b, config);
  auto mean = [](const std::vector<FrameError>& v, double FrameError::*field) {
    double s = 0.0;
    for (const auto& e : v) s += e.*field;
    return s / static_cast<double>(v.size());
  };
  c.mean_vm_a = mean(c.a, &FrameError::vm);
  c.mean_va_a = mean(c.a, &FrameError::va);
  c.mean_vm_b = mean(c.b, &FrameError::vm);
  c.mean_va_b = mean(c.b, &FrameError::va);
  auto pct = [](double a, double b) { return a > 0.0 ? 100.0 * (a - b) / a : 0.0; };
  c.improvement_vm = pct(c.mean_vm_a, c.mean_vm_b);
  c.improvement_va = pct(c.mean_va_a, c.mean_va_b);
  return c;
}

}  // namespace gridsense
