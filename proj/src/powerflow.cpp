#include "gridsense/powerflow.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include <omp.h>

namespace gridsense {

namespace {

using cd = std::complex<double>;

struct BusIndex {
  std::vector<int> pvpq;
  std::vector<int> pq;
};

BusIndex classify(const PowerNetwork& net) {
  BusIndex idx;
  for (const auto& b : net.buses()) {
    if (b.kind == BusKind::slack) continue;
    idx.pvpq.push_back(b.id);
    if (b.kind == BusKind::load) idx.pq.push_back(b.id);
  }
  return idx;
}

CVector phasors(const Vector& vm, const Vector& va) {
  CVector v(vm.size());
  for (Eigen::Index i = 0; i < vm.size(); ++i) v(i) = std::polar(vm(i), va(i));
  return v;
}

}  // namespace

OperatingPoint base_operating_point(const PowerNetwork& net) {
  const int n = net.size();
  OperatingPoint op{Vector(n), Vector(n), Vector(n), Vector(n)};
  for (const auto& b : net.buses()) {
    op.load_p(b.id) = b.base_load_p;
    op.load_q(b.id) = b.base_load_q;
    op.gen_p(b.id) = b.gen_p;
    op.v_setpoint(b.id) = b.voltage_setpoint;
  }
  return op;
}

OperatingPoint operating_point_from_frame(const PowerNetwork& net, const MeasurementFrame& frame) {
  const int n = net.size();
  OperatingPoint op{Vector(n), Vector(n), Vector::Zero(n), Vector(n)};
  for (int i = 0; i < n; ++i) {
    op.load_p(i) = -frame(i, Channel::P);
    op.load_q(i) = -frame(i, Channel::Q);
    op.v_setpoint(i) = net.bus(i).kind == BusKind::load ? 1.0 : frame(i, Channel::V);
  }
  return op;
}

Vector power_mismatch(const PowerNetwork& net, const OperatingPoint& op, const Vector& vm,
                      const Vector& va) {
  const auto idx = classify(net);
  const CVector v = phasors(vm, va);
  const CVector s = v.cwiseProduct((net.ybus() * v).conjugate());
  Vector f(idx.pvpq.size() + idx.pq.size());
  Eigen::Index k = 0;
  for (int i : idx.pvpq) f(k++) = s(i).real() - (op.gen_p(i) - op.load_p(i));
  for (int i : idx.pq) f(k++) = s(i).imag() + op.load_q(i);
  return f;
}

PowerDerivatives power_derivatives(const PowerNetwork& net, const Vector& vm, const Vector& va) {
  const int n = net.size();
  const CMatrix& y = net.ybus();
  const CVector v = phasors(vm, va);
  const CVector ibus = y * v;
  CVector vnorm(n);
  for (int i = 0; i < n; ++i) vnorm(i) = v(i) / vm(i);

  // dS/dVa = j diag(V) conj(diag(I) - Y diag(V))
  // dS/dVm = diag(V) conj(Y diag(Vnorm)) + conj(diag(I)) diag(Vnorm)
  PowerDerivatives d;
  d.s = v.cwiseProduct(ibus.conjugate());
  d.ds_dva = -(y * v.asDiagonal());
  d.ds_dva.diagonal() += ibus;
  d.ds_dva = cd(0.0, 1.0) * (v.asDiagonal() * d.ds_dva.conjugate());
  d.ds_dvm = v.asDiagonal() * (y * vnorm.asDiagonal()).conjugate();
  d.ds_dvm.diagonal() += ibus.conjugate().cwiseProduct(vnorm);
  return d;
}

Matrix powerflow_jacobian(const PowerNetwork& net, const Vector& vm, const Vector& va) {
  const auto idx = classify(net);
  const auto d = power_derivatives(net, vm, va);
  const CMatrix& ds_dva = d.ds_dva;
  const CMatrix& ds_dvm = d.ds_dvm;

  const auto npvpq = static_cast<Eigen::Index>(idx.pvpq.size());
  const auto npq = static_cast<Eigen::Index>(idx.pq.size());
  Matrix j(npvpq + npq, npvpq + npq);
  for (Eigen::Index r = 0; r < npvpq; ++r) {
    for (Eigen::Index c = 0; c < npvpq; ++c) j(r, c) = ds_dva(idx.pvpq[r], idx.pvpq[c]).real();
    for (Eigen::Index c = 0; c < npq; ++c) j(r, npvpq + c) = ds_dvm(idx.pvpq[r], idx.pq[c]).real();
  }
  for (Eigen::Index r = 0; r < npq; ++r) {
    for (Eigen::Index c = 0; c < npvpq; ++c) j(npvpq + r, c) = ds_dva(idx.pq[r], idx.pvpq[c]).imag();
    for (Eigen::Index c = 0; c < npq; ++c) j(npvpq + r, npvpq + c) = ds_dvm(idx.pq[r], idx.pq[c]).imag();
  }
  return j;
}

PowerFlowSolution solve_powerflow(const PowerNetwork& net, const OperatingPoint& op,
                                  const PowerFlowOptions& options) {
  const auto idx = classify(net);
  const int n = net.size();
  PowerFlowSolution sol;
  sol.vm = Vector::Ones(n);
  sol.va = Vector::Zero(n);
  for (const auto& b : net.buses())
    if (b.kind != BusKind::load) sol.vm(b.id) = op.v_setpoint(b.id);

  const auto npvpq = static_cast<Eigen::Index>(idx.pvpq.size());
  Vector f = power_mismatch(net, op, sol.vm, sol.va);
  sol.mismatch = f.size() ? f.lpNorm<Eigen::Infinity>() : 0.0;
  while (sol.mismatch >= options.tolerance) {
    if (sol.iterations >= options.max_iterations || !std::isfinite(sol.mismatch))
      throw DivergenceError("power flow did not converge after " + std::to_string(sol.iterations) +
                                " iterations (mismatch " + std::to_string(sol.mismatch) + ")",
                            sol.mismatch);
    const Matrix jac = powerflow_jacobian(net, sol.vm, sol.va);
    const Vector dx = jac.partialPivLu().solve(-f);
    for (Eigen::Index k = 0; k < npvpq; ++k) sol.va(idx.pvpq[k]) += dx(k);
    for (std::size_t k = 0; k < idx.pq.size(); ++k) sol.vm(idx.pq[k]) += dx(npvpq + static_cast<Eigen::Index>(k));
    ++sol.iterations;
    f = power_mismatch(net, op, sol.vm, sol.va);
    sol.mismatch = f.lpNorm<Eigen::Infinity>();
  }
  return sol;
}

MeasurementFrame extract_frame(const PowerNetwork& net, const Vector& vm, const Vector& va, int t) {
  const int n = net.size();
  const CVector v = phasors(vm, va);
  const CVector current = net.ybus() * v;
  MeasurementFrame frame{t, FrameMatrix(n, kChannels), Label::benign, AttackType::none};
  for (int i = 0; i < n; ++i) {
    const cd s = v(i) * std::conj(current(i));
    frame(i, Channel::V) = vm(i);
    frame(i, Channel::I) = std::abs(current(i));
    frame(i, Channel::theta) = va(i);
    frame(i, Channel::delta) = current(i) == cd(0.0, 0.0) ? 0.0 : std::arg(current(i));
    frame(i, Channel::P) = s.real();
    frame(i, Channel::Q) = s.imag();
  }
  return frame;
}

LoadProfile make_load_profile(const PowerNetwork& net, const ProfileConfig& config) {
  if (config.length < 1) throw ConfigError("load profile length must be at least 1");
  if (!(config.low > 0.0) || config.high < config.low)
    throw ConfigError("load profile range must satisfy 0 < low <= high");
  LoadProfile profile{config, Matrix(config.length, net.size())};
  for (int t = 0; t < config.length; ++t) {
    Rng rng = make_rng(config.seed, static_cast<std::uint64_t>(t));
    const double curve = 1.0 + config.daily_amplitude *
                                   std::sin(2.0 * std::numbers::pi * t / std::max(config.period, 1));
    for (int i = 0; i < net.size(); ++i) {
      const double noise = config.noise * (2.0 * uniform01(rng) - 1.0);
      profile.multipliers(t, i) = std::clamp(curve + noise, config.low, config.high);
    }
  }
  return profile;
}

OperatingPoint operating_point_at(const PowerNetwork& net, const LoadProfile& profile, int t) {
  OperatingPoint op = base_operating_point(net);
  const double base_total = op.load_p.sum();
  op.load_p = op.load_p.cwiseProduct(profile.multipliers.row(t).transpose());
  op.load_q = op.load_q.cwiseProduct(profile.multipliers.row(t).transpose());
  if (base_total > 0.0) op.gen_p *= op.load_p.sum() / base_total;
  return op;
}

Dataset generate_dataset(const PowerNetwork& net, const LoadProfile& profile, Exec exec,
                         const PowerFlowOptions& options) {
  const int length = profile.length();
  std::vector<std::optional<MeasurementFrame>> slots(static_cast<std::size_t>(length));
  auto solve_one = [&](int t) {
    try {
      const auto sol = solve_powerflow(net, operating_point_at(net, profile, t), options);
      slots[t] = extract_frame(net, sol.vm, sol.va, t);
    } catch (const DivergenceError&) {
      slots[t].reset();
    }
  };
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic) num_threads(worker_count())
    for (int t = 0; t < length; ++t) solve_one(t);
  } else {
    for (int t = 0; t < length; ++t) solve_one(t);
  }
  Dataset out;
  for (int t = 0; t < length; ++t) {
    if (slots[t])
      out.frames.push_back(std::move(*slots[t]));
    else
      out.skipped.push_back(t);
  }
  return out;
}

}  // namespace gridsense
