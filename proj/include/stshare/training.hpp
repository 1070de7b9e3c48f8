#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "stshare/metrics.hpp"
#include "stshare/models.hpp"
#include "stshare/pipeline.hpp"

namespace stshare {

// Training protocol: class-weighted categorical cross-entropy, plain SGD,
// halve-on-plateau learning rate, early stopping with best-checkpoint
// restore, and n-seed averaged reporting.

struct TrainConfig {
  double lr0 = 0.001;           // 0.0005 for the baseline model
  int batch = 8;
  int max_epochs = 85;
  double plateau_factor = 0.5;
  int plateau_patience = 5;
  int early_stop_patience = 12;
  double min_lr = 1e-6;
  double improve_threshold = 1e-4;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4};

  void validate() const {
    if (plateau_factor <= 0.0 || plateau_factor >= 1.0)
      throw std::invalid_argument("plateau factor must be in (0, 1)");
    if (batch < 2) throw std::invalid_argument("batch must be >= 2 (batch norm)");
    if (max_epochs < 1 || plateau_patience < 1 || early_stop_patience < 1)
      throw std::invalid_argument("nonpositive training horizon");
  }
};

// Halves the learning rate after `patience` epochs without an improvement
// greater than `threshold`; the counter resets after each reduction. Never
// steps below min_lr.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr0, double factor, int patience, double threshold, double min_lr)
      : lr_(lr0), factor_(factor), patience_(patience), threshold_(threshold), min_lr_(min_lr) {}

  // Returns true when the rate was reduced this step.
  bool step(double val_loss) {
    if (val_loss < best_ - threshold_) {
      best_ = val_loss;
      bad_epochs_ = 0;
      return false;
    }
    if (++bad_epochs_ >= patience_) {
      bad_epochs_ = 0;
      if (lr_ * factor_ >= min_lr_ * (1.0 - 1e-12)) {
        lr_ *= factor_;
        return true;
      }
    }
    return false;
  }

  double lr() const { return lr_; }

 private:
  double lr_, factor_;
  int patience_;
  double threshold_, min_lr_;
  double best_ = std::numeric_limits<double>::infinity();
  int bad_epochs_ = 0;
};

// Stops after `patience` epochs without improvement; tracks the best epoch.
class EarlyStopper {
 public:
  EarlyStopper(int patience, double threshold) : patience_(patience), threshold_(threshold) {}

  // Returns true when this epoch improved on the best so far.
  bool step(double val_loss, int epoch) {
    if (val_loss < best_ - threshold_) {
      best_ = val_loss;
      best_epoch_ = epoch;
      bad_epochs_ = 0;
      return true;
    }
    ++bad_epochs_;
    return false;
  }

  bool should_stop() const { return bad_epochs_ >= patience_; }
  int best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_; }

 private:
  int patience_;
  double threshold_;
  double best_ = std::numeric_limits<double>::infinity();
  int best_epoch_ = -1;
  int bad_epochs_ = 0;
};

// p <- p - lr * g. Plain SGD, no momentum. Throws on non-finite gradients so
// the caller can abort the epoch with a diagnostic.
template <typename T>
void sgd_step(const std::vector<Parameter<T>*>& params, double lr) {
  for (Parameter<T>* p : params) {
    for (std::size_t i = 0; i < p->grad.size(); ++i) {
      const T g = p->grad[i];
      if (!std::isfinite(static_cast<double>(g)))
        throw std::runtime_error("non-finite gradient in " + p->name);
      p->value[i] -= static_cast<T>(lr) * g;
    }
  }
}

struct EpochRow {
  int epoch;
  double lr, train_loss, train_acc, val_loss, val_acc;
};

struct RunManifest {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<EpochRow> history;
  std::vector<double> lr_trace;
  int best_epoch = -1;
  double best_val_loss = std::numeric_limits<double>::quiet_NaN();
  bool failed = false;
  std::string fail_reason;
  bool has_test_metrics = false;
  MetricReport test_metrics;
};

// One split converted to the training scalar type.
template <typename T>
struct SplitTensors {
  Tensor<T> img, flow;
  std::vector<int> labels;
  int count() const { return static_cast<int>(labels.size()); }
};

template <typename T>
SplitTensors<T> to_split_tensors(const SplitCuboids& s) {
  SplitTensors<T> out;
  out.img = s.image.cuboids.template cast<T>();
  out.flow = s.flow.cuboids.template cast<T>();
  out.labels = s.image.labels;
  return out;
}

namespace traindetail {

template <typename T>
Tensor<T> gather_batch(const Tensor<T>& data, const std::vector<int>& idx) {
  Shape s = data.shape();
  const std::size_t sample = shape_numel(s) / static_cast<std::size_t>(s[0]);
  s[0] = static_cast<int>(idx.size());
  Tensor<T> out(s);
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy(data.data() + static_cast<std::size_t>(idx[i]) * sample,
              data.data() + (static_cast<std::size_t>(idx[i]) + 1) * sample,
              out.data() + i * sample);
  return out;
}

}  // namespace traindetail

// Inference over a split; batch norm uses running statistics, dropout is off.
template <typename T>
PredictionSet predict(Network<T>& net, const SplitTensors<T>& data, int batch = 8) {
  PredictionSet out;
  out.n = data.count();
  out.labels = data.labels;
  out.probs.resize(static_cast<std::size_t>(out.n) * kNumClasses);
  RunCtx ctx{0, 0};
  for (int lo = 0; lo < out.n; lo += batch) {
    const int hi = std::min(lo + batch, out.n);
    std::vector<int> idx(static_cast<std::size_t>(hi - lo));
    for (int i = lo; i < hi; ++i) idx[static_cast<std::size_t>(i - lo)] = i;
    Tape<T> tape;
    Var rgb = tape.constant(traindetail::gather_batch(data.img, idx));
    Var flow = tape.constant(traindetail::gather_batch(data.flow, idx));
    auto res = net.forward(tape, rgb, flow, Mode::kInfer, ctx);
    const auto& p = tape.value(res.probs);
    for (int i = 0; i < hi - lo; ++i)
      for (int c = 0; c < kNumClasses; ++c)
        out.probs[static_cast<std::size_t>((lo + i) * kNumClasses + c)] =
            static_cast<double>(p[static_cast<std::size_t>(i * kNumClasses + c)]);
  }
  return out;
}

template <typename T>
struct EvalResult {
  double loss, accuracy;
};

template <typename T>
EvalResult<T> evaluate_split(Network<T>& net, const SplitTensors<T>& data,
                             const std::vector<T>& class_w, int batch) {
  double loss_sum = 0;
  int correct = 0;
  RunCtx ctx{0, 0};
  for (int lo = 0; lo < data.count(); lo += batch) {
    const int hi = std::min(lo + batch, data.count());
    std::vector<int> idx(static_cast<std::size_t>(hi - lo));
    std::vector<int> labels(static_cast<std::size_t>(hi - lo));
    for (int i = lo; i < hi; ++i) {
      idx[static_cast<std::size_t>(i - lo)] = i;
      labels[static_cast<std::size_t>(i - lo)] = data.labels[static_cast<std::size_t>(i)];
    }
    Tape<T> tape;
    Var rgb = tape.constant(traindetail::gather_batch(data.img, idx));
    Var flow = tape.constant(traindetail::gather_batch(data.flow, idx));
    auto res = net.forward(tape, rgb, flow, Mode::kInfer, ctx);
    Var loss = weighted_cross_entropy(tape, res.probs, labels, class_w);
    loss_sum += static_cast<double>(tape.value(loss).item()) * (hi - lo);
    const auto& p = tape.value(res.probs);
    for (int i = 0; i < hi - lo; ++i) {
      int best = 0;
      for (int c = 1; c < kNumClasses; ++c)
        if (p[static_cast<std::size_t>(i * kNumClasses + c)] >
            p[static_cast<std::size_t>(i * kNumClasses + best)])
          best = c;
      correct += best == labels[static_cast<std::size_t>(i)];
    }
  }
  return {loss_sum / std::max(1, data.count()),
          static_cast<double>(correct) / std::max(1, data.count())};
}

using EpochCallback = std::function<void(const EpochRow&)>;

// The full protocol. Class weights come from the training split only; every
// source of randomness derives from `seed`; the best-validation-loss
// parameters are restored before returning.
template <typename T>
RunManifest fit(Network<T>& net, const SplitTensors<T>& train, const SplitTensors<T>& val,
                const TrainConfig& cfg, std::uint64_t seed,
                const EpochCallback& on_epoch = nullptr) {
  cfg.validate();
  if (train.count() == 0 || val.count() == 0)
    throw std::invalid_argument("fit: empty training or validation split");

  RunManifest manifest;
  manifest.seed = seed;

  std::array<int, kNumClasses> counts{};
  for (int l : train.labels) counts[static_cast<std::size_t>(l)]++;
  for (int c = 0; c < kNumClasses; ++c)
    if (!counts[static_cast<std::size_t>(c)]) {
      manifest.failed = true;
      manifest.fail_reason = std::string("training split lacks class ") + class_name(c);
      return manifest;
    }
  const ClassWeights cw = class_weights(counts);
  std::vector<T> class_w(kNumClasses);
  for (int c = 0; c < kNumClasses; ++c) class_w[static_cast<std::size_t>(c)] = static_cast<T>(cw.w[static_cast<std::size_t>(c)]);

  auto params = net.params();
  auto state = net.state();
  PlateauScheduler sched(cfg.lr0, cfg.plateau_factor, cfg.plateau_patience, cfg.improve_threshold,
                         cfg.min_lr);
  EarlyStopper stopper(cfg.early_stop_patience, cfg.improve_threshold);

  // Snapshots cover trainable parameters and batch-norm running statistics,
  // so the restored model reproduces the best epoch's validation loss.
  std::vector<Tensor<T>> best_params, best_state;
  auto snapshot = [&] {
    best_params.clear();
    best_state.clear();
    for (auto* p : params) best_params.push_back(p->value);
    for (auto& [name, t] : state) best_state.push_back(*t);
  };
  auto restore = [&] {
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best_params[i];
    for (std::size_t i = 0; i < state.size(); ++i) *state[i].second = best_state[i];
  };

  std::int64_t global_step = 0;
  std::vector<int> order(static_cast<std::size_t>(train.count()));
  for (int i = 0; i < train.count(); ++i) order[static_cast<std::size_t>(i)] = i;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const double lr = sched.lr();
    Rng shuffle_rng(mix_seed(seed, static_cast<std::uint64_t>(epoch)));
    shuffle(order, shuffle_rng);

    double train_loss = 0;
    int train_correct = 0, train_seen = 0;
    const int nbatches = train.count() / cfg.batch;  // drop-last
    try {
      for (int b = 0; b < nbatches; ++b, ++global_step) {
        std::vector<int> idx(order.begin() + b * cfg.batch, order.begin() + (b + 1) * cfg.batch);
        std::vector<int> labels(static_cast<std::size_t>(cfg.batch));
        for (int i = 0; i < cfg.batch; ++i)
          labels[static_cast<std::size_t>(i)] = train.labels[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
        Tape<T> tape;
        Var rgb = tape.constant(traindetail::gather_batch(train.img, idx));
        Var flow = tape.constant(traindetail::gather_batch(train.flow, idx));
        RunCtx ctx{seed, global_step};
        auto res = net.forward(tape, rgb, flow, Mode::kTrain, ctx);
        Var loss = weighted_cross_entropy(tape, res.probs, labels, class_w);
        const double lval = static_cast<double>(tape.value(loss).item());
        if (!std::isfinite(lval)) throw std::runtime_error("training loss diverged (non-finite)");
        train_loss += lval * cfg.batch;
        const auto& p = tape.value(res.probs);
        for (int i = 0; i < cfg.batch; ++i) {
          int best = 0;
          for (int c = 1; c < kNumClasses; ++c)
            if (p[static_cast<std::size_t>(i * kNumClasses + c)] >
                p[static_cast<std::size_t>(i * kNumClasses + best)])
              best = c;
          train_correct += best == labels[static_cast<std::size_t>(i)];
        }
        train_seen += cfg.batch;
        zero_grads(params);
        tape.backward(loss);
        sgd_step(params, lr);
      }
    } catch (const std::runtime_error& e) {
      manifest.failed = true;
      manifest.fail_reason = std::string(e.what()) + " at epoch " + std::to_string(epoch);
      if (!best_params.empty()) restore();
      return manifest;
    }

    const auto val_stats = evaluate_split(net, val, class_w, cfg.batch);
    EpochRow row{epoch, lr, train_seen ? train_loss / train_seen : 0.0,
                 train_seen ? static_cast<double>(train_correct) / train_seen : 0.0,
                 val_stats.loss, val_stats.accuracy};
    manifest.history.push_back(row);
    manifest.lr_trace.push_back(lr);
    if (on_epoch) on_epoch(row);

    if (stopper.step(val_stats.loss, epoch)) snapshot();
    sched.step(val_stats.loss);
    if (stopper.should_stop()) break;
  }

  if (!best_params.empty()) restore();
  manifest.best_epoch = stopper.best_epoch();
  manifest.best_val_loss = stopper.best_loss();
  return manifest;
}

// ---------------------------------------------------------------------------
// n-seed protocol: train/evaluate once per seed, report mean and sample std
// per metric, keep every per-seed manifest.
// ---------------------------------------------------------------------------

struct SeedOutcome {
  std::uint64_t seed;
  RunManifest manifest;
  MetricReport test;
};

struct MultiSeedReport {
  std::vector<SeedOutcome> runs;     // successful seeds
  std::vector<SeedOutcome> failed;   // excluded, reported
  Aggregate accuracy, f1, ap, auc_micro, auc_macro;

  std::string headline() const {
    return format_mean_std(accuracy.mean, accuracy.std, /*percent=*/true) + "%";
  }
};

template <typename T>
MultiSeedReport multi_seed_run(const std::function<Network<T>(std::uint64_t)>& make_net,
                               const SplitTensors<T>& train, const SplitTensors<T>& val,
                               const SplitTensors<T>& test, const TrainConfig& cfg,
                               const EpochCallback& on_epoch = nullptr) {
  if (cfg.seeds.size() < 2) throw std::invalid_argument("multi-seed run needs >= 2 seeds");
  MultiSeedReport report;
  std::vector<double> acc, f1, ap, mauc, Mauc;
  for (std::uint64_t seed : cfg.seeds) {
    Network<T> net = make_net(seed);
    SeedOutcome outcome;
    outcome.seed = seed;
    outcome.manifest = fit(net, train, val, cfg, seed, on_epoch);
    if (outcome.manifest.failed) {
      report.failed.push_back(std::move(outcome));
      continue;
    }
    auto preds = predict(net, test, cfg.batch);
    preds.split_tag = "test";
    outcome.test = evaluate(preds);
    outcome.manifest.has_test_metrics = true;
    outcome.manifest.test_metrics = outcome.test;
    acc.push_back(outcome.test.accuracy);
    f1.push_back(outcome.test.f1_macro);
    ap.push_back(outcome.test.ap_micro);
    mauc.push_back(outcome.test.auc_micro);
    Mauc.push_back(outcome.test.auc_macro);
    report.runs.push_back(std::move(outcome));
  }
  if (report.runs.empty()) throw std::runtime_error("every seed run failed");
  report.accuracy = Aggregate::of(acc);
  report.f1 = Aggregate::of(f1);
  report.ap = Aggregate::of(ap);
  report.auc_micro = Aggregate::of(mauc);
  report.auc_macro = Aggregate::of(Mauc);
  return report;
}

}  // namespace stshare
