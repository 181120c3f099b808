#include <doctest.h>

#include <filesystem>
#include <numbers>
#include <sstream>

#include "gridsense/attacks.hpp"
#include "gridsense/detector.hpp"
#include "gridsense/experiment.hpp"
#include "support.hpp"

using namespace gridsense;
using gridsense::test::case14;

namespace {

std::vector<MeasurementFrame> benign_frames(const PowerNetwork& net, int length, std::uint64_t seed) {
  ProfileConfig pc;
  pc.length = length;
  pc.seed = seed;
  return generate_dataset(net, make_load_profile(net, pc)).frames;
}

// Attacked frames get a large offset on P at bus 2, observed under the
// baseline layout, so the classes separate on one input feature.
std::pair<std::vector<MeasurementFrame>, std::vector<MeasurementFrame>> separable(const PowerNetwork& net) {
  const auto frames = benign_frames(net, 80, 3);
  std::vector<MeasurementFrame> train, val;
  for (std::size_t k = 0; k < frames.size(); ++k) {
    auto f = frames[k];
    if (k % 2 == 1) {
      f(1, Channel::P) += 1.0;
      f.label = Label::attacked;
      f.attack_type = AttackType::random;
    }
    (k % 5 < 4 ? train : val).push_back(f);
  }
  return {train, val};
}

double rel(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale < 1e-7 ? std::abs(a - b) : std::abs(a - b) / scale;
}

const PipelineData& pipeline() {
  static const PipelineData data = [] {
    ExperimentConfig cfg;
    cfg.profile.length = 120;
    cfg.resolve();
    return prepare_pipeline(cfg);
  }();
  return data;
}

}  // namespace

TEST_CASE("physics residuals") {
  FrameMatrix x(1, kChannels);
  const double phi = std::numbers::pi / 3;
  x << 1.0, 2.0, phi + 0.2, 0.2, 1.0, std::sqrt(3.0);
  const auto r = physics_residuals(x);
  CHECK(r.l_p < 1e-30);
  CHECK(r.l_q < 1e-30);
  // The printed variant uses cos for both terms.
  const auto verbatim = physics_residuals(x, ReactiveMode::cosine);
  CHECK(verbatim.l_q == doctest::Approx(std::pow(std::sqrt(3.0) - 1.0, 2)));

  FrameMatrix ten = x.replicate(10, 1);
  ten(4, static_cast<int>(Channel::P)) += 0.1;
  CHECK(physics_residuals(ten).l_p == doctest::Approx(1e-3).epsilon(1e-9));
}

TEST_CASE("physics residuals separate benign and randomly attacked frames") {
  const auto& net = case14();
  const auto frames = benign_frames(net, 40, 8);
  AttackConfig cfg;
  cfg.alpha = 0.1;
  cfg.channels = {false, false, false, false, true, false};
  int above = 0;
  for (const auto& f : frames) {
    const auto b = physics_residuals(f.values);
    CHECK(b.l_p < 1e-10);
    CHECK(b.l_q < 1e-10);
    cfg.seed = static_cast<std::uint64_t>(f.t);
    const double attacked = physics_residuals(attack_random(f, cfg).values).l_p;
    CHECK(attacked > 1e-6);
    CHECK(attacked > 1e6 * b.l_p);
    above += attacked > 1e-4;
  }
  // In per-unit the 1e-4 level is only reached when a heavily loaded bus is
  // among the targets; the acceptance run reports the strict form.
  MESSAGE("attacked frames with L_P > 1e-4: " << above << " of " << frames.size());
}

TEST_CASE("total loss arithmetic") {
  CHECK(total_loss(0.5, 0.04, 0.06, 1.0, 0.2) == doctest::Approx(0.52).epsilon(1e-15));
  CHECK(total_loss(0.7, 3.0, 4.0, 1.0, 0.0) == 0.7);
  CHECK(total_loss(0.0, 0.0, 0.0, 1.0, 0.2) == 0.0);
  const TrainConfig defaults;
  CHECK(defaults.lambda_data == 1.0);
  CHECK(defaults.lambda_phy == 0.2);
  CHECK(defaults.train_ratio == 0.7);
}

TEST_CASE("analytic gradients match central differences") {
  const auto& net = case14();
  const auto frames = benign_frames(net, 10, 2);
  Rng rng(31);
  PlacementGenome g(14);
  g.set(3, true);
  g.set(8, true);
  const auto mask = observation_mask(net, g);
  for (ReactiveMode mode : {ReactiveMode::sine, ReactiveMode::cosine}) {
    DetectorModel model(net, 2, 8, 5);
    model.fit_normalization(frames);
    for (Eigen::Index k = 0; k < model.parameter_count(); ++k) model.parameters()(k) += 0.3 * (uniform01(rng) - 0.5);
    TrainConfig cfg;
    cfg.reactive = mode;
    cfg.lambda_phy = 50.0;  // physics terms are tiny in per-unit; scale them up so they register
    const auto attacked = attack_random(frames[1], AttackConfig{});
    for (const auto* frame : {&frames[0], &attacked}) {
      const auto sample = model.prepare(*frame, mask);
      Vector grad = Vector::Zero(model.parameter_count());
      model.loss(sample, cfg, &grad);
      double worst = 0.0;
      for (int probe = 0; probe < 100; ++probe) {
        const auto k = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(model.parameter_count()));
        const double keep = model.parameters()(k), h = 1e-5;
        model.parameters()(k) = keep + h;
        const double up = model.loss(sample, cfg).total;
        model.parameters()(k) = keep - h;
        const double down = model.loss(sample, cfg).total;
        model.parameters()(k) = keep;
        worst = std::max(worst, rel(grad(k), (up - down) / (2 * h)));
      }
      CHECK(worst < 1e-4);
      // Tail parameters (classifier bias and residual weights) every time.
      for (Eigen::Index k = model.parameter_count() - 3; k < model.parameter_count(); ++k) {
        const double keep = model.parameters()(k), h = 1e-5;
        model.parameters()(k) = keep + h;
        const double up = model.loss(sample, cfg).total;
        model.parameters()(k) = keep - h;
        const double down = model.loss(sample, cfg).total;
        model.parameters()(k) = keep;
        CHECK(rel(grad(k), (up - down) / (2 * h)) < 1e-4);
      }
    }
  }
}

TEST_CASE("predictions ignore masked-out channels") {
  const auto& net = case14();
  const auto frames = benign_frames(net, 6, 4);
  DetectorModel model(net, 2, 16, 9);
  model.fit_normalization(frames);
  Rng rng(2);
  for (Eigen::Index k = model.parameter_count() - 2; k < model.parameter_count(); ++k) model.parameters()(k) = 0.7;
  const auto mask = observation_mask(net, PlacementGenome::from_bus_numbers(14, std::vector<int>{4, 9}));
  for (const auto& f : frames) {
    const double base = model.logit(model.prepare(f, mask));
    auto fuzzed = f;
    for (int i = 0; i < 14; ++i)
      for (int c = 0; c < kChannels; ++c)
        if (mask.observed(i, c) == 0.0) fuzzed.values(i, c) = 10.0 * (uniform01(rng) - 0.5);
    CHECK(model.logit(model.prepare(fuzzed, mask)) == base);
    const auto s = model.prepare(fuzzed, mask);
    for (int i = 0; i < 14; ++i) {
      CHECK(s.features(i, kChannels) == mask.sensor(i));
      for (int c = 0; c < kChannels; ++c)
        if (mask.observed(i, c) == 0.0) CHECK(s.features(i, c) == 0.0);
    }
  }
}

TEST_CASE("reported total equals the weighted sum of its parts") {
  const auto& net = case14();
  const auto frames = benign_frames(net, 4, 6);
  DetectorModel model(net, 2, 8, 1);
  model.fit_normalization(frames);
  TrainConfig cfg;
  for (const auto& f : frames) {
    const auto lb = model.loss(model.prepare(f, baseline_mask(net)), cfg);
    CHECK(std::abs(lb.total - (cfg.lambda_data * lb.data + cfg.lambda_phy * (lb.l_p + lb.l_q))) < 1e-12);
    CHECK(std::abs(lb.data - (lb.bce + cfg.rec_weight * lb.reconstruction)) < 1e-12);
  }
}

TEST_CASE("baseline layout") {
  const auto& net = case14();
  const auto mask = baseline_mask(net);
  auto row = [&](int i) { return std::vector<double>(mask.observed.row(i).begin(), mask.observed.row(i).end()); };
  CHECK(row(0) == std::vector<double>{1, 0, 1, 0, 1, 0});
  CHECK(row(1) == std::vector<double>{1, 0, 0, 0, 1, 0});
  CHECK(row(3) == std::vector<double>{0, 0, 0, 0, 1, 1});
  CHECK(mask.sensor.isZero());
  const auto full = observation_mask(net, PlacementGenome(std::vector<std::uint8_t>(14, 1)));
  CHECK(full.observed_count() == 14 * kChannels);
  CHECK(observation_mask(net, PlacementGenome(14), false).observed_count() == 0);
}

TEST_CASE("training separates linearly separable data") {
  const auto& net = case14();
  const auto [train_frames, val_frames] = separable(net);
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.batch_size = 8;
  const auto res = train(net, train_frames, val_frames, baseline_mask(net), cfg);
  CHECK(res.curve.size() == 50);
  CHECK(res.best_epoch >= 1);
  double best_acc = 0.0;
  for (const auto& r : res.curve) best_acc = std::max(best_acc, r.val_accuracy);
  CHECK(best_acc >= 0.99);
  CHECK(evaluate(res.model, val_frames, baseline_mask(net)).acc >= 0.99);

  const auto again = train(net, train_frames, val_frames, baseline_mask(net), cfg);
  CHECK(again.val_loss == res.val_loss);
  CHECK(again.model == res.model);

  std::ostringstream csv;
  write_training_curve_csv(csv, res.curve);
  CHECK(csv.str().rfind("epoch,train_loss,val_loss,val_accuracy\n", 0) == 0);
}

TEST_CASE("training errors") {
  const auto& net = case14();
  const auto frames = benign_frames(net, 10, 1);
  CHECK_THROWS_AS(train(net, frames, frames, baseline_mask(net), TrainConfig{}), TrainingError);

  auto [train_frames, val_frames] = separable(net);
  train_frames[2].values(3, static_cast<int>(Channel::P)) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(train(net, train_frames, val_frames, baseline_mask(net), TrainConfig{}), TrainingError);

  TrainConfig bad;
  bad.train_ratio = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("model file round trip") {
  const auto& net = case14();
  DetectorModel model(net, 2, 8, 3);
  model.fit_normalization(benign_frames(net, 5, 1));
  const auto path = std::filesystem::temp_directory_path() / "gridsense_model_test.bin";
  model.save(path);
  CHECK(DetectorModel::load(path) == model);
  std::filesystem::remove(path);
}

TEST_CASE("detection metrics") {
  const auto m = metrics_from_confusion(Confusion{8, 1, 9, 2});
  CHECK(m.tpr == doctest::Approx(0.8));
  CHECK(m.fpr == doctest::Approx(0.1));
  CHECK(m.acc == doctest::Approx(0.85));
  CHECK(m.prec == doctest::Approx(8.0 / 9.0));
  CHECK(m.f1 == doctest::Approx(2 * (8.0 / 9.0) * 0.8 / ((8.0 / 9.0) + 0.8)));
  CHECK(m.f1 == doctest::Approx(0.8421).epsilon(1e-4));

  const auto perfect = metrics_from_confusion(Confusion{5, 0, 5, 0});
  CHECK(perfect.acc == 1.0);
  CHECK(perfect.f1 == 1.0);
  CHECK(perfect.fpr == 0.0);

  const auto& net = case14();
  const auto [train_frames, val_frames] = separable(net);
  DetectorModel benign_only(net, 1, 4, 1);
  benign_only.fit_normalization(train_frames);
  benign_only.parameters().setZero();
  benign_only.parameters()(benign_only.parameter_count() - 3) = -10.0;
  const auto c = evaluate(benign_only, val_frames, baseline_mask(net));
  CHECK(c.acc == doctest::Approx(0.5));
  CHECK(c.tpr == 0.0);
  CHECK(c.fpr == 0.0);
  CHECK(c.f1 == 0.0);
  CHECK_THROWS(evaluate(benign_only, std::span<const MeasurementFrame>{}, baseline_mask(net)));
}

TEST_CASE("f2 fitness") {
  const auto& data = pipeline();
  const auto& net = data.net;
  DetectorFitness f2(net, data.splits.train, data.splits.val, TrainConfig{});
  DetectorFitness bare(net, data.splits.train, data.splits.val, TrainConfig{}, false);
  CHECK_THROWS(bare(PlacementGenome(14)));

  const double baseline = f2(PlacementGenome(14));
  const double full = f2(PlacementGenome(std::vector<std::uint8_t>(14, 1)));
  CHECK(full <= baseline * 1.05);
  CHECK(f2.trainings() == 2);
  CHECK(f2(PlacementGenome(14)) == baseline);
  CHECK(f2.trainings() == 2);
}
