#include "gridsense/detector.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace gridsense {

namespace {

constexpr int kV = 0, kI = 1, kTheta = 2, kDelta = 3, kP = 4, kQ = 5;

using ConstMap = Eigen::Map<const Matrix>;
using MutMap = Eigen::Map<Matrix>;

// Offsets of each parameter block inside the flat vector.
struct Layout {
  std::vector<Eigen::Index> ws, wn, b;
  std::vector<int> in;
  Eigen::Index wr = 0, br = 0, wc = 0, c = 0, vp = 0, vq = 0, total = 0;

  Layout(int layers, int hidden) {
    Eigen::Index at = 0;
    for (int l = 0; l < layers; ++l) {
      const int fan_in = l == 0 ? DetectorModel::kFeatures : hidden;
      in.push_back(fan_in);
      ws.push_back(at);
      at += fan_in * hidden;
      wn.push_back(at);
      at += fan_in * hidden;
      b.push_back(at);
      at += hidden;
    }
    wr = at;
    at += hidden * kChannels;
    br = at;
    at += kChannels;
    wc = at;
    at += hidden;
    c = at;
    vp = at + 1;
    vq = at + 2;
    total = at + 3;
  }
};

double softplus(double s) { return std::max(s, 0.0) + std::log1p(std::exp(-std::abs(s))); }
double sigmoid(double s) {
  if (s >= 0) return 1.0 / (1.0 + std::exp(-s));
  const double e = std::exp(s);
  return e / (1.0 + e);
}

double reactive_term(double phi, ReactiveMode mode) { return mode == ReactiveMode::sine ? std::sin(phi) : std::cos(phi); }
double reactive_slope(double phi, ReactiveMode mode) {
  return mode == ReactiveMode::sine ? std::cos(phi) : -std::sin(phi);
}

// Active/reactive residuals at one bus and their partials w.r.t. the six
// channels.
struct Residual {
  double p = 0.0, q = 0.0;
  std::array<double, kChannels> dp{}, dq{};
};

Residual residual_at(const FrameMatrix& x, int i, ReactiveMode mode) {
  const double v = x(i, kV), cur = x(i, kI), phi = x(i, kTheta) - x(i, kDelta);
  const double cs = std::cos(phi), sn = std::sin(phi);
  const double g = reactive_term(phi, mode), dg = reactive_slope(phi, mode);
  Residual r;
  r.p = x(i, kP) - v * cur * cs;
  r.q = x(i, kQ) - v * cur * g;
  r.dp = {-cur * cs, -v * cs, v * cur * sn, -v * cur * sn, 1.0, 0.0};
  r.dq = {-cur * g, -v * g, -v * cur * dg, v * cur * dg, 0.0, 1.0};
  return r;
}

Matrix neighbor_mean(const PowerNetwork& net) {
  const int n = net.size();
  Matrix a = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    const auto& nb = net.neighbors()[i];
    for (int j : nb) a(i, j) = 1.0 / static_cast<double>(nb.size());
  }
  return a;
}

}  // namespace

ObservationMask baseline_mask(const PowerNetwork& net) {
  ObservationMask mask{FrameMatrix::Zero(net.size(), kChannels), Vector::Zero(net.size())};
  for (int i = 0; i < net.size(); ++i) {
    switch (net.bus(i).kind) {
      case BusKind::slack:
        mask.observed(i, kV) = mask.observed(i, kTheta) = mask.observed(i, kP) = 1.0;
        break;
      case BusKind::generator:
        mask.observed(i, kV) = mask.observed(i, kP) = 1.0;
        break;
      case BusKind::load:
        mask.observed(i, kP) = mask.observed(i, kQ) = 1.0;
        break;
    }
  }
  return mask;
}

ObservationMask observation_mask(const PowerNetwork& net, const PlacementGenome& genome, bool include_baseline) {
  if (genome.size() != net.size()) throw ValidationError("genome length does not match the network");
  ObservationMask mask = include_baseline
                             ? baseline_mask(net)
                             : ObservationMask{FrameMatrix::Zero(net.size(), kChannels), Vector::Zero(net.size())};
  for (int i = 0; i < net.size(); ++i) {
    if (!genome[i]) continue;
    mask.observed.row(i).setOnes();
    mask.sensor(i) = 1.0;
  }
  return mask;
}

PhysicsResiduals physics_residuals(const FrameMatrix& x, ReactiveMode mode) {
  PhysicsResiduals out;
  const auto n = x.rows();
  if (n == 0) return out;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double vi = x(i, kV) * x(i, kI);
    const double phi = x(i, kTheta) - x(i, kDelta);
    const double rp = x(i, kP) - vi * std::cos(phi);
    const double rq = x(i, kQ) - vi * reactive_term(phi, mode);
    out.l_p += rp * rp;
    out.l_q += rq * rq;
  }
  out.l_p /= static_cast<double>(n);
  out.l_q /= static_cast<double>(n);
  return out;
}

double total_loss(double l_data, double l_p, double l_q, double lambda_data, double lambda_phy) {
  return lambda_data * l_data + lambda_phy * (l_p + l_q);
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (lambda_data < 0.0 || lambda_phy < 0.0 || rec_weight < 0.0)
    throw ConfigError("loss weights must be non-negative");
  if (!(train_ratio > 0.0 && train_ratio < 1.0)) throw ConfigError("train ratio must lie in (0, 1)");
  if (layers < 1 || hidden < 1) throw ConfigError("layers and hidden width must be positive");
}

DetectorModel::DetectorModel(const PowerNetwork& net, int layers, int hidden, std::uint64_t seed)
    : layers_(layers),
      hidden_(hidden),
      adjacency_(neighbor_mean(net)),
      mean_(FrameMatrix::Zero(net.size(), kChannels)),
      scale_(FrameMatrix::Ones(net.size(), kChannels)) {
  if (layers < 1 || hidden < 1) throw ConfigError("layers and hidden width must be positive");
  const Layout lay(layers, hidden);
  params_ = Vector::Zero(lay.total);
  Rng rng = make_rng(seed, 0x696e6974);
  auto fill = [&](Eigen::Index at, int rows, int cols) {
    const double a = std::sqrt(6.0 / (rows + cols));
    for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(rows) * cols; ++k)
      params_(at + k) = a * (2.0 * uniform01(rng) - 1.0);
  };
  for (int l = 0; l < layers; ++l) {
    fill(lay.ws[l], lay.in[l], hidden);
    fill(lay.wn[l], lay.in[l], hidden);
  }
  fill(lay.wr, hidden, kChannels);
  fill(lay.wc, hidden, 1);
}

bool DetectorModel::operator==(const DetectorModel& o) const {
  auto same = [](const auto& a, const auto& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
  };
  return layers_ == o.layers_ && hidden_ == o.hidden_ && same(adjacency_, o.adjacency_) && same(mean_, o.mean_) &&
         same(scale_, o.scale_) && same(params_, o.params_);
}

void DetectorModel::fit_normalization(std::span<const MeasurementFrame> frames) {
  if (frames.empty()) throw ValidationError("cannot normalize on an empty frame set");
  FrameMatrix sum = FrameMatrix::Zero(buses(), kChannels), sq = sum;
  for (const auto& f : frames) {
    if (f.buses() != buses()) throw ValidationError("frame size does not match the detector");
    sum += f.values;
  }
  mean_ = sum / static_cast<double>(frames.size());
  for (const auto& f : frames) sq += (f.values - mean_).cwiseAbs2();
  scale_ = (sq / static_cast<double>(frames.size())).cwiseSqrt();
  for (Eigen::Index i = 0; i < scale_.size(); ++i)
    if (!(scale_.data()[i] >= 1e-8)) scale_.data()[i] = 1.0;
}

PreparedSample DetectorModel::prepare(const MeasurementFrame& frame, const ObservationMask& mask) const {
  const int n = buses();
  if (frame.buses() != n || mask.buses() != n) throw ValidationError("frame or mask size does not match the detector");
  PreparedSample s;
  s.features = Matrix::Zero(n, kFeatures);
  s.base = mean_;
  s.observed = mask.observed;
  s.label = frame.label == Label::attacked ? 1.0 : 0.0;
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < kChannels; ++c) {
      if (mask.observed(i, c) == 0.0) continue;
      s.features(i, c) = (frame.values(i, c) - mean_(i, c)) / scale_(i, c);
      s.base(i, c) = frame.values(i, c);
    }
    s.features(i, kChannels) = mask.sensor(i);
  }
  return s;
}

LossBreakdown DetectorModel::loss(const PreparedSample& sample, const TrainConfig& config, Vector* grad,
                                  double* logit_out, FrameMatrix* reconstruction) const {
  const Layout lay(layers_, hidden_);
  const int n = buses();
  const double* p = params_.data();

  std::vector<Matrix> hs(static_cast<std::size_t>(layers_) + 1), ahs(static_cast<std::size_t>(layers_));
  hs[0] = sample.features;
  for (int l = 0; l < layers_; ++l) {
    const ConstMap ws(p + lay.ws[l], lay.in[l], hidden_), wn(p + lay.wn[l], lay.in[l], hidden_);
    const Eigen::Map<const Vector> b(p + lay.b[l], hidden_);
    ahs[l] = adjacency_ * hs[l];
    Matrix z = hs[l] * ws + ahs[l] * wn;
    z.rowwise() += b.transpose();
    hs[l + 1] = z.array().tanh();
  }
  const Matrix& h = hs[layers_];
  const ConstMap wr(p + lay.wr, hidden_, kChannels);
  const Eigen::Map<const Vector> br(p + lay.br, kChannels), wc(p + lay.wc, hidden_);
  Matrix out = h * wr;
  out.rowwise() += br.transpose();
  const FrameMatrix xhat = sample.base + (scale_.array() * out.array()).matrix();
  const Vector pool = h.colwise().mean().transpose();

  // Physics terms act on the reconstruction. The classifier also sees the
  // scaled residual energy of the measured values completed by it.
  FrameMatrix xfill = xhat;
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < kChannels; ++c)
      if (sample.observed(i, c) != 0.0) xfill(i, c) = sample.base(i, c);
  std::vector<Residual> phys(n), fill(n);
  double l_p = 0.0, l_q = 0.0, ep = 0.0, eq = 0.0;
  for (int i = 0; i < n; ++i) {
    phys[i] = residual_at(xhat, i, config.reactive);
    fill[i] = residual_at(xfill, i, config.reactive);
    l_p += phys[i].p * phys[i].p;
    l_q += phys[i].q * phys[i].q;
    ep += std::pow(fill[i].p / scale_(i, kP), 2);
    eq += std::pow(fill[i].q / scale_(i, kQ), 2);
  }
  ep /= n;
  eq /= n;
  const double s = pool.dot(wc) + p[lay.c] + p[lay.vp] * ep + p[lay.vq] * eq;

  LossBreakdown lb;
  lb.bce = softplus(s) - sample.label * s;
  const double n_obs = std::max(1.0, sample.observed.sum());
  lb.reconstruction = (out.array().square() * sample.observed.array()).sum() / n_obs;
  lb.data = lb.bce + config.rec_weight * lb.reconstruction;

  lb.l_p = l_p / n;
  lb.l_q = l_q / n;
  lb.total = total_loss(lb.data, lb.l_p, lb.l_q, config.lambda_data, config.lambda_phy);
  if (logit_out) *logit_out = s;
  if (reconstruction) *reconstruction = xhat;
  if (!grad) return lb;

  Vector& g = *grad;
  if (g.size() != params_.size()) g = Vector::Zero(params_.size());
  double* gp = g.data();

  const double ds = config.lambda_data * (sigmoid(s) - sample.label);
  const double cphy = 2.0 * config.lambda_phy / n;
  Matrix dxhat = Matrix::Zero(n, kChannels);
  for (int i = 0; i < n; ++i) {
    const double ap = cphy * phys[i].p, aq = cphy * phys[i].q;
    const double fp = ds * p[lay.vp] * 2.0 * fill[i].p / (n * scale_(i, kP) * scale_(i, kP));
    const double fq = ds * p[lay.vq] * 2.0 * fill[i].q / (n * scale_(i, kQ) * scale_(i, kQ));
    for (int c = 0; c < kChannels; ++c) {
      dxhat(i, c) = ap * phys[i].dp[c] + aq * phys[i].dq[c];
      if (sample.observed(i, c) == 0.0) dxhat(i, c) += fp * fill[i].dp[c] + fq * fill[i].dq[c];
    }
  }
  gp[lay.vp] += ds * ep;
  gp[lay.vq] += ds * eq;
  Matrix dout = (dxhat.array() * scale_.array()).matrix();
  dout += (2.0 * config.lambda_data * config.rec_weight / n_obs) * (out.array() * sample.observed.array()).matrix();

  MutMap(gp + lay.wr, hidden_, kChannels) += h.transpose() * dout;
  Eigen::Map<Vector>(gp + lay.br, kChannels) += dout.colwise().sum().transpose();
  Matrix dh = dout * wr.transpose();

  Eigen::Map<Vector>(gp + lay.wc, hidden_) += ds * pool;
  gp[lay.c] += ds;
  dh.rowwise() += (ds / n) * wc.transpose();

  for (int l = layers_ - 1; l >= 0; --l) {
    const ConstMap ws(p + lay.ws[l], lay.in[l], hidden_), wn(p + lay.wn[l], lay.in[l], hidden_);
    const Matrix dz = (dh.array() * (1.0 - hs[l + 1].array().square())).matrix();
    MutMap(gp + lay.ws[l], lay.in[l], hidden_) += hs[l].transpose() * dz;
    MutMap(gp + lay.wn[l], lay.in[l], hidden_) += ahs[l].transpose() * dz;
    Eigen::Map<Vector>(gp + lay.b[l], hidden_) += dz.colwise().sum().transpose();
    if (l > 0) dh = dz * ws.transpose() + adjacency_.transpose() * (dz * wn.transpose());
  }
  return lb;
}

double DetectorModel::logit(const PreparedSample& sample) const {
  double s = 0.0;
  loss(sample, TrainConfig{}, nullptr, &s);
  return s;
}

double DetectorModel::probability(const PreparedSample& sample) const { return sigmoid(logit(sample)); }

void DetectorModel::save(const std::filesystem::path& path) const {
  static_assert(std::endian::native == std::endian::little, "model files store little-endian doubles");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  nlohmann::ordered_json header;
  header["format"] = "gridsense-detector";
  header["version"] = 1;
  header["buses"] = buses();
  header["layers"] = layers_;
  header["hidden"] = hidden_;
  header["parameters"] = params_.size();
  out << header.dump() << '\n';
  auto put = [&](const double* data, Eigen::Index count) {
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(double)));
  };
  put(mean_.data(), mean_.size());
  put(scale_.data(), scale_.size());
  put(adjacency_.data(), adjacency_.size());
  put(params_.data(), params_.size());
  if (!out) throw Error("failed writing " + path.string());
}

DetectorModel DetectorModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad model header: ") + e.what(), 1);
  }
  if (header.value("format", "") != "gridsense-detector" || header.value("version", 0) != 1)
    throw ParseError("unsupported model file", 1);
  DetectorModel m;
  const int n = header.at("buses").get<int>();
  m.layers_ = header.at("layers").get<int>();
  m.hidden_ = header.at("hidden").get<int>();
  const auto count = header.at("parameters").get<Eigen::Index>();
  if (Layout(m.layers_, m.hidden_).total != count) throw ParseError("parameter count does not match layout", 1);
  m.mean_.resize(n, kChannels);
  m.scale_.resize(n, kChannels);
  m.adjacency_.resize(n, n);
  m.params_.resize(count);
  auto get = [&](double* data, Eigen::Index size) {
    in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(size * sizeof(double)));
    if (!in) throw ParseError("truncated model file", 0);
  };
  get(m.mean_.data(), m.mean_.size());
  get(m.scale_.data(), m.scale_.size());
  get(m.adjacency_.data(), m.adjacency_.size());
  get(m.params_.data(), m.params_.size());
  return m;
}

LossBreakdown mean_loss(const DetectorModel& model, std::span<const MeasurementFrame> frames,
                        const ObservationMask& mask, const TrainConfig& config) {
  LossBreakdown acc;
  if (frames.empty()) return acc;
  for (const auto& f : frames) {
    const auto lb = model.loss(model.prepare(f, mask), config);
    acc.bce += lb.bce;
    acc.reconstruction += lb.reconstruction;
    acc.data += lb.data;
    acc.l_p += lb.l_p;
    acc.l_q += lb.l_q;
    acc.total += lb.total;
  }
  const double k = static_cast<double>(frames.size());
  acc.bce /= k;
  acc.reconstruction /= k;
  acc.data /= k;
  acc.l_p /= k;
  acc.l_q /= k;
  acc.total /= k;
  return acc;
}

TrainResult train(const PowerNetwork& net, std::span<const MeasurementFrame> train_frames,
                  std::span<const MeasurementFrame> val_frames, const ObservationMask& mask,
                  const TrainConfig& config) {
  config.validate();
  if (mask.observed_count() == 0) throw ValidationError("observation mask has no observed channels");
  const auto positives = std::count_if(train_frames.begin(), train_frames.end(),
                                       [](const MeasurementFrame& f) { return f.label == Label::attacked; });
  if (positives == 0 || positives == static_cast<long>(train_frames.size()))
    throw TrainingError("training data must contain both benign and attacked frames");

  TrainResult result;
  DetectorModel model(net, config.layers, config.hidden, config.seed);
  model.fit_normalization(train_frames);
  std::vector<PreparedSample> train_set, val_set;
  for (const auto& f : train_frames) train_set.push_back(model.prepare(f, mask));
  for (const auto& f : val_frames) val_set.push_back(model.prepare(f, mask));

  const Eigen::Index np = model.parameter_count();
  Vector m = Vector::Zero(np), v = Vector::Zero(np), grad(np);
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long step = 0;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_rng(config.seed, 0x74726e);
  double best = std::numeric_limits<double>::infinity();
  Vector best_params = model.parameters();

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      grad.setZero();
      double batch_loss = 0.0;
      for (std::size_t k = start; k < stop; ++k) batch_loss += model.loss(train_set[order[k]], config, &grad).total;
      const double size = static_cast<double>(stop - start);
      grad /= size;
      if (!std::isfinite(batch_loss) || !grad.allFinite()) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch << ", batch starting at " << start
            << " (batch loss " << batch_loss << ", |grad| " << grad.norm() << ")";
        throw TrainingError(msg.str());
      }
      epoch_loss += batch_loss;
      ++step;
      m = beta1 * m + (1.0 - beta1) * grad;
      v = beta2 * v + (1.0 - beta2) * grad.cwiseAbs2();
      const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      model.parameters().array() -=
          config.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    }
    EpochRecord rec{epoch, epoch_loss / static_cast<double>(train_set.size()), 0.0, 0.0};
    const auto& monitor = val_set.empty() ? train_set : val_set;
    int correct = 0;
    for (const auto& s : monitor) {
      double logit = 0.0;
      rec.val_loss += model.loss(s, config, nullptr, &logit).total;
      correct += (logit > 0.0) == (s.label > 0.5);
    }
    rec.val_loss /= static_cast<double>(monitor.size());
    rec.val_accuracy = static_cast<double>(correct) / static_cast<double>(monitor.size());
    result.curve.push_back(rec);
    if (rec.val_loss < best) {
      best = rec.val_loss;
      best_params = model.parameters();
      result.best_epoch = epoch;
    }
  }
  model.parameters() = best_params;
  result.model = std::move(model);
  result.val_loss = best;
  return result;
}

void write_training_curve_csv(std::ostream& out, const std::vector<EpochRecord>& curve) {
  out << "epoch,train_loss,val_loss,val_accuracy\n";
  for (const auto& r : curve) out << r.epoch << ',' << r.train_loss << ',' << r.val_loss << ',' << r.val_accuracy << '\n';
}

DetectionMetrics metrics_from_confusion(const Confusion& c) {
  auto ratio = [](double a, double b) { return b > 0.0 ? a / b : 0.0; };
  DetectionMetrics m;
  m.confusion = c;
  const double total = c.tp + c.fp + c.tn + c.fn;
  m.acc = ratio(c.tp + c.tn, total);
  m.tpr = ratio(c.tp, c.tp + c.fn);
  m.fpr = ratio(c.fp, c.fp + c.tn);
  m.prec = ratio(c.tp, c.tp + c.fp);
  m.f1 = ratio(2.0 * m.prec * m.tpr, m.prec + m.tpr);
  return m;
}

DetectionMetrics evaluate(const DetectorModel& model, std::span<const MeasurementFrame> frames,
                          const ObservationMask& mask, double threshold) {
  if (frames.empty()) throw ValidationError("empty test set");
  Confusion c;
  for (const auto& f : frames) {
    const bool predicted = model.probability(model.prepare(f, mask)) >= threshold;
    const bool actual = f.label == Label::attacked;
    if (predicted && actual) ++c.tp;
    else if (predicted) ++c.fp;
    else if (actual) ++c.fn;
    else ++c.tn;
  }
  return metrics_from_confusion(c);
}

DetectorFitness::DetectorFitness(const PowerNetwork& net, std::vector<MeasurementFrame> train_frames,
                                 std::vector<MeasurementFrame> val_frames, TrainConfig config, bool include_baseline)
    : net_(&net),
      train_(std::move(train_frames)),
      val_(std::move(val_frames)),
      config_(config),
      include_baseline_(include_baseline) {
  config_.validate();
  if (val_.empty()) throw ValidationError("f2 needs a non-empty validation split");
}

double DetectorFitness::operator()(const PlacementGenome& genome) {
  const auto key = genome.key();
  {
    std::lock_guard lock(mutex_);
    if (const auto it = cache_.find(key); it != cache_.end()) return it->second;
  }
  const auto mask = observation_mask(*net_, genome, include_baseline_);
  if (mask.observed_count() == 0) throw ValidationError("genome leaves no observable input");
  const double value = train(*net_, train_, val_, mask, config_).val_loss;
  ++trainings_;
  std::lock_guard lock(mutex_);
  cache_.emplace(key, value);
  return value;
}

}  // namespace gridsense
