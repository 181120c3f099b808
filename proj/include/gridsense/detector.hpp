#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "gridsense/frames.hpp"
#include "gridsense/netmodel.hpp"
#include "gridsense/placement.hpp"

namespace gridsense {

/// Which trigonometric term the reactive residual uses. `sine` is the AC
/// identity Q = V I sin(theta - delta); `cosine` reproduces the variant that
/// mirrors the active-power residual.
enum class ReactiveMode { sine, cosine };

/// Per-bus, per-channel observation pattern (entries 0/1) plus the sensor bit
/// fed to the detector as a seventh feature.
struct ObservationMask {
  FrameMatrix observed;
  Vector sensor;

  int buses() const noexcept { return static_cast<int>(observed.rows()); }
  int observed_count() const { return static_cast<int>(observed.sum()); }
};

/// Existing metering: |V|, P at generators; P, Q at loads; |V|, theta, P at
/// the slack bus.
ObservationMask baseline_mask(const PowerNetwork& net);
/// Baseline plus all six channels at every placed sensor.
ObservationMask observation_mask(const PowerNetwork& net, const PlacementGenome& genome,
                                 bool include_baseline = true);

struct PhysicsResiduals {
  double l_p = 0.0;
  double l_q = 0.0;
};

/// L_P = mean_i (P - V I cos(theta - delta))^2, L_Q likewise with sin (or cos).
PhysicsResiduals physics_residuals(const FrameMatrix& x, ReactiveMode mode = ReactiveMode::sine);

struct LossBreakdown {
  double bce = 0.0;
  double reconstruction = 0.0;
  double data = 0.0;  // bce + rec_weight * reconstruction
  double l_p = 0.0;
  double l_q = 0.0;
  double total = 0.0;
};

/// lambda_data * L_Data + lambda_phy * (L_P + L_Q).
double total_loss(double l_data, double l_p, double l_q, double lambda_data, double lambda_phy);

struct TrainConfig {
  int epochs = 30;
  int batch_size = 32;
  double learning_rate = 0.01;
  double lambda_data = 1.0;
  double lambda_phy = 0.2;
  double rec_weight = 0.1;
  double train_ratio = 0.7;
  int layers = 2;
  int hidden = 32;
  ReactiveMode reactive = ReactiveMode::sine;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Detector input for one frame under one observation mask.
struct PreparedSample {
  Matrix features;   // N x 7, normalized, zero where unobserved
  FrameMatrix base;  // raw observed value, or the channel mean
  FrameMatrix observed;
  double label = 0.0;
};

/// Message-passing detector: L layers of h' = tanh(H Ws + mean_nbr(H) Wn + b),
/// a reconstruction head X^ = base + sigma * (H Wr + br) and a mean-pooled
/// logistic head.
class DetectorModel {
 public:
  static constexpr int kFeatures = kChannels + 1;

  DetectorModel() = default;
  DetectorModel(const PowerNetwork& net, int layers, int hidden, std::uint64_t seed);

  int buses() const noexcept { return static_cast<int>(mean_.rows()); }
  int layers() const noexcept { return layers_; }
  int hidden() const noexcept { return hidden_; }
  Eigen::Index parameter_count() const noexcept { return params_.size(); }
  Vector& parameters() noexcept { return params_; }
  const Vector& parameters() const noexcept { return params_; }
  const FrameMatrix& channel_mean() const noexcept { return mean_; }
  const FrameMatrix& channel_scale() const noexcept { return scale_; }

  /// Per (bus, channel) mean and standard deviation over `frames`; scales
  /// below 1e-8 fall back to 1.
  void fit_normalization(std::span<const MeasurementFrame> frames);

  PreparedSample prepare(const MeasurementFrame& frame, const ObservationMask& mask) const;

  /// Loss for one sample; accumulates d loss / d params into `grad` when
  /// non-null. Also returns the logit and reconstruction when requested.
  LossBreakdown loss(const PreparedSample& sample, const TrainConfig& config, Vector* grad = nullptr,
                     double* logit = nullptr, FrameMatrix* reconstruction = nullptr) const;

  double logit(const PreparedSample& sample) const;
  double probability(const PreparedSample& sample) const;

  /// One JSON header line followed by the raw little-endian doubles.
  void save(const std::filesystem::path& path) const;
  static DetectorModel load(const std::filesystem::path& path);

  bool operator==(const DetectorModel& other) const;

 private:
  int layers_ = 0;
  int hidden_ = 0;
  Matrix adjacency_;  // row-normalized neighbor mean
  FrameMatrix mean_;
  FrameMatrix scale_;
  Vector params_;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainResult {
  DetectorModel model;  // parameters of the best validation epoch
  double val_loss = 0.0;
  int best_epoch = 0;
  std::vector<EpochRecord> curve;
};

/// Adam on mini-batches; deterministic for a given seed. Throws
/// TrainingError for single-class training data or a non-finite loss.
TrainResult train(const PowerNetwork& net, std::span<const MeasurementFrame> train_frames,
                  std::span<const MeasurementFrame> val_frames, const ObservationMask& mask,
                  const TrainConfig& config);

/// Mean loss over `frames` (the validation L_T when given the val split).
LossBreakdown mean_loss(const DetectorModel& model, std::span<const MeasurementFrame> frames,
                        const ObservationMask& mask, const TrainConfig& config);

void write_training_curve_csv(std::ostream& out, const std::vector<EpochRecord>& curve);

struct Confusion {
  int tp = 0, fp = 0, tn = 0, fn = 0;
};

struct DetectionMetrics {
  double acc = 0.0, tpr = 0.0, fpr = 0.0, prec = 0.0, f1 = 0.0;
  Confusion confusion;
};

/// ACC, TPR, FPR, PREC, F1 from counts; undefined ratios are reported as 0.
DetectionMetrics metrics_from_confusion(const Confusion& c);
DetectionMetrics evaluate(const DetectorModel& model, std::span<const MeasurementFrame> frames,
                          const ObservationMask& mask, double threshold = 0.5);

/// Objective f2: validation L_T of a detector trained from scratch on the
/// genome's observation mask. Memoized per genome; thread safe.
class DetectorFitness {
 public:
  DetectorFitness(const PowerNetwork& net, std::vector<MeasurementFrame> train_frames,
                  std::vector<MeasurementFrame> val_frames, TrainConfig config, bool include_baseline = true);

  double operator()(const PlacementGenome& genome);
  int trainings() const noexcept { return trainings_.load(); }

 private:
  const PowerNetwork* net_;
  std::vector<MeasurementFrame> train_;
  std::vector<MeasurementFrame> val_;
  TrainConfig config_;
  bool include_baseline_;
  std::mutex mutex_;
  std::map<std::string, double> cache_;
  std::atomic<int> trainings_{0};
};

}  // namespace gridsense
