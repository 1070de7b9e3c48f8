#include <gtest/gtest.h>

#include <cmath>

#include "stshare/config.hpp"
#include "stshare/synth.hpp"
#include "stshare/training.hpp"

namespace stshare {
namespace {

TEST(Sgd, ZeroGradsLeaveParamsUnchanged) {
  Parameter<double> p("p", Tensor<double>({3}, {1.0, -2.0, 0.5}));
  p.zero_grad();
  sgd_step<double>({&p}, 0.1);
  EXPECT_DOUBLE_EQ(p.value[0], 1.0);
  EXPECT_DOUBLE_EQ(p.value[1], -2.0);
}

TEST(Sgd, BasicUpdateArithmetic) {
  Parameter<double> p("p", Tensor<double>({1}, {1.0}));
  p.grad[0] = 2.0;
  sgd_step<double>({&p}, 0.1);
  EXPECT_DOUBLE_EQ(p.value[0], 0.8);
}

TEST(Sgd, TwoHalfStepsEqualOneFullStepOnFrozenGradient) {
  Parameter<double> a("a", Tensor<double>({2}, {0.3, -0.7}));
  Parameter<double> b("b", Tensor<double>({2}, {0.3, -0.7}));
  a.grad[0] = b.grad[0] = 1.5;
  a.grad[1] = b.grad[1] = -0.25;
  sgd_step<double>({&a}, 0.05);
  sgd_step<double>({&a}, 0.05);
  sgd_step<double>({&b}, 0.1);
  EXPECT_DOUBLE_EQ(a.value[0], b.value[0]);
  EXPECT_DOUBLE_EQ(a.value[1], b.value[1]);
}

TEST(Sgd, NonFiniteGradientThrows) {
  Parameter<double> p("p", Tensor<double>({1}, {1.0}));
  p.grad[0] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(sgd_step<double>({&p}, 0.1), std::runtime_error);
}

TEST(PlateauScheduler, MonotoneImprovementNeverReduces) {
  PlateauScheduler s(0.001, 0.5, 5, 1e-4, 1e-6);
  for (int e = 0; e < 30; ++e) EXPECT_FALSE(s.step(1.0 - 0.01 * e));
  EXPECT_DOUBLE_EQ(s.lr(), 0.001);
}

TEST(PlateauScheduler, ConstantLossHalvesAtPatienceMultiples) {
  PlateauScheduler s(0.001, 0.5, 5, 1e-4, 1e-6);
  std::vector<int> reduced_at;
  for (int e = 1; e <= 20; ++e)
    if (s.step(1.0)) reduced_at.push_back(e);
  // First observation sets the best; halves after 5 bad epochs, then again
  // every 5: epochs 6, 11, 16.
  EXPECT_EQ(reduced_at, (std::vector<int>{6, 11, 16}));
  EXPECT_DOUBLE_EQ(s.lr(), 0.001 * 0.125);
}

TEST(PlateauScheduler, EveryChangeIsExactlyHalving) {
  PlateauScheduler s(0.001, 0.5, 2, 1e-4, 1e-6);
  double prev = s.lr();
  for (int e = 0; e < 40; ++e) {
    s.step(2.0);
    if (s.lr() != prev) EXPECT_DOUBLE_EQ(s.lr(), prev * 0.5);
    EXPECT_LE(s.lr(), prev);
    prev = s.lr();
  }
  EXPECT_GE(s.lr(), 1e-6);
}

TEST(PlateauScheduler, NeverDropsBelowMinLr) {
  PlateauScheduler s(1e-5, 0.5, 1, 1e-4, 1e-6);
  for (int e = 0; e < 50; ++e) s.step(1.0);
  EXPECT_GE(s.lr(), 1e-6 * (1.0 - 1e-12));
  EXPECT_LE(s.lr(), 2e-6);
}

TEST(EarlyStopper, StopsAfterPatienceAndTracksBest) {
  EarlyStopper s(3, 1e-4);
  const double losses[] = {1.0, 0.8, 0.85, 0.7, 0.71, 0.72, 0.73};
  int stopped_at = -1;
  for (int e = 0; e < 7; ++e) {
    s.step(losses[e], e + 1);
    if (s.should_stop()) {
      stopped_at = e + 1;
      break;
    }
  }
  EXPECT_EQ(stopped_at, 7);  // epochs 5,6,7 fail to improve on 0.7
  EXPECT_EQ(s.best_epoch(), 4);
  EXPECT_DOUBLE_EQ(s.best_loss(), 0.7);
}

TEST(ClassWeightsForTraining, UniformCountsGiveExactlyUnitWeights) {
  std::array<int, kNumClasses> counts;
  counts.fill(6);
  auto w = class_weights(counts);
  for (double v : w.w) EXPECT_EQ(v, 1.0);  // bitwise: uniform == unweighted
}

struct TinyData {
  SplitTensors<double> train, val, test;
};

TinyData make_tiny_data(std::uint64_t seed) {
  SynthOptions opt;
  opt.clips_per_class = 5;
  opt.t = 8;
  opt.height = 12;
  opt.width = 16;
  auto clips = synth_generate(seed, opt);
  auto split = split_dataset(clips, SplitPolicy::kStratified, seed);
  PipelineOptions popt;
  popt.t = 8;
  popt.height = 12;
  popt.width = 16;
  popt.modality = Modality::kRgb;
  popt.flow_levels = 1;  // tiny frames
  TinyData d;
  d.train = to_split_tensors<double>(build_split(split.train, popt, nullptr, "train"));
  d.val = to_split_tensors<double>(build_split(split.val, popt, nullptr, "val"));
  d.test = to_split_tensors<double>(build_split(split.test, popt, nullptr, "test"));
  return d;
}

ModelConfig tiny_model_config() {
  ModelConfig cfg;
  cfg.kind = ModelKind::kBaseline;
  cfg.t = 8;
  cfg.h = 12;
  cfg.w = 16;
  cfg.width_scale = 0.125;
  return cfg;
}

TEST(Fit, DeterministicBitwiseInFloat64) {
  auto data = make_tiny_data(11);
  TrainConfig tc;
  tc.lr0 = 0.01;
  tc.max_epochs = 4;
  auto run = [&] {
    auto net = Network<double>::assemble(tiny_model_config());
    return fit(net, data.train, data.val, tc, 77);
  };
  auto m1 = run();
  auto m2 = run();
  ASSERT_EQ(m1.history.size(), m2.history.size());
  for (std::size_t i = 0; i < m1.history.size(); ++i) {
    EXPECT_EQ(m1.history[i].train_loss, m2.history[i].train_loss);
    EXPECT_EQ(m1.history[i].val_loss, m2.history[i].val_loss);
    EXPECT_EQ(m1.history[i].lr, m2.history[i].lr);
  }
}

TEST(Fit, RestoredParamsReproduceBestValLoss) {
  auto data = make_tiny_data(13);
  TrainConfig tc;
  tc.lr0 = 0.02;  // noisy on purpose so the best epoch is not the last
  tc.max_epochs = 8;
  auto net = Network<double>::assemble(tiny_model_config());
  auto manifest = fit(net, data.train, data.val, tc, 3);
  ASSERT_FALSE(manifest.failed);
  ASSERT_GE(manifest.best_epoch, 1);
  double min_val = manifest.history[0].val_loss;
  for (const auto& r : manifest.history) min_val = std::min(min_val, r.val_loss);
  EXPECT_EQ(manifest.best_val_loss, min_val);

  // Re-evaluating the restored parameters reproduces the recorded best.
  std::array<int, kNumClasses> counts{};
  for (int l : data.train.labels) counts[static_cast<std::size_t>(l)]++;
  auto cw = class_weights(counts);
  std::vector<double> w(cw.w.begin(), cw.w.end());
  auto stats = evaluate_split(net, data.val, w, tc.batch);
  EXPECT_EQ(stats.loss, manifest.best_val_loss);
}

TEST(Fit, LrTraceNonIncreasingAndHalving) {
  auto data = make_tiny_data(17);
  TrainConfig tc;
  tc.lr0 = 0.05;
  tc.max_epochs = 14;
  tc.plateau_patience = 2;
  tc.early_stop_patience = 20;
  auto net = Network<double>::assemble(tiny_model_config());
  auto manifest = fit(net, data.train, data.val, tc, 5);
  for (std::size_t i = 1; i < manifest.lr_trace.size(); ++i) {
    EXPECT_LE(manifest.lr_trace[i], manifest.lr_trace[i - 1]);
    if (manifest.lr_trace[i] != manifest.lr_trace[i - 1])
      EXPECT_DOUBLE_EQ(manifest.lr_trace[i], manifest.lr_trace[i - 1] * 0.5);
  }
}

TEST(MultiSeed, IdenticalSeedsGiveZeroStd) {
  auto data = make_tiny_data(19);
  TrainConfig tc;
  tc.lr0 = 0.01;
  tc.max_epochs = 3;
  tc.seeds = {42, 42};
  auto report = multi_seed_run<double>(
      [&](std::uint64_t seed) {
        ModelConfig cfg = tiny_model_config();
        cfg.init_seed = seed;
        return Network<double>::assemble(cfg);
      },
      data.train, data.val, data.test, tc);
  EXPECT_EQ(report.runs.size(), 2u);
  EXPECT_DOUBLE_EQ(report.accuracy.std, 0.0);
  EXPECT_DOUBLE_EQ(report.f1.std, 0.0);
  // Headline formatting like "NN.NN±S.SS%".
  const std::string head = report.headline();
  EXPECT_NE(head.find("±"), std::string::npos);
  EXPECT_EQ(head.back(), '%');
  EXPECT_NE(head.find("0.00"), std::string::npos);
}

TEST(ExperimentIni, RoundTripsThroughAssemble) {
  ExperimentConfig c;
  c.model.kind = ModelKind::kSrs;
  c.model.sharing = false;
  c.model.t = 16;
  c.train.lr0 = 0.001;
  c.train.seeds = {9, 8, 7, 6};
  c.modality = Modality::kGrayscale;
  c.model.img_channels = 1;
  c.data_dir = "some/dir";
  const std::string ini = to_ini(c);
  auto parsed = experiment_from_ini(ini);
  EXPECT_EQ(parsed.model.kind, ModelKind::kSrs);
  EXPECT_FALSE(parsed.model.sharing);
  EXPECT_EQ(parsed.model.t, 16);
  EXPECT_EQ(parsed.model.img_channels, 1);
  EXPECT_EQ(parsed.modality, Modality::kGrayscale);
  EXPECT_EQ(parsed.train.seeds, (std::vector<std::uint64_t>{9, 8, 7, 6}));
  EXPECT_EQ(parsed.data_dir, "some/dir");
  // Assembles into the same trace as the original config.
  auto a = Network<float>::assemble(c.model);
  auto b = Network<float>::assemble(parsed.model);
  EXPECT_EQ(a.shape_trace(), b.shape_trace());
  EXPECT_EQ(a.param_count().total, b.param_count().total);
}

TEST(ExperimentIni, ModuleSectionMismatchRejected) {
  ExperimentConfig c;
  c.model.kind = ModelKind::kCrs;
  std::string ini = to_ini(c);
  const auto pos = ini.find("n = 12");
  ASSERT_NE(pos, std::string::npos);
  ini.replace(pos, 6, "n = 13");
  EXPECT_THROW(experiment_from_ini(ini), std::invalid_argument);
}

TEST(ExperimentIni, BadTemporalLengthRejected) {
  ExperimentConfig c;
  c.model.t = 6;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

}  // namespace
}  // namespace stshare
