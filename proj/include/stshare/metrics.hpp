#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "stshare/classes.hpp"

namespace stshare {

// Evaluation suite: confusion/accuracy, macro F1, one-vs-rest ROC AUC in
// micro and macro averaging, average precision, top-k, and softmax-averaging
// ensembles. AUC is computed from exact pair statistics (rank averaging over
// ties), so it agrees bit-for-bit with a brute-force pair-counting oracle.

struct PredictionSet {
  int n = 0;
  int classes = kNumClasses;
  std::vector<double> probs;  // row-major [n, classes]
  std::vector<int> labels;    // ground truth ids
  std::string model_tag;
  std::string split_tag;

  double at(int i, int c) const { return probs[static_cast<std::size_t>(i * classes + c)]; }

  void validate() const {
    if (static_cast<int>(labels.size()) != n || probs.size() != static_cast<std::size_t>(n) * classes)
      throw std::invalid_argument("prediction set sizes inconsistent");
    for (int i = 0; i < n; ++i) {
      double s = 0;
      for (int c = 0; c < classes; ++c) s += at(i, c);
      if (std::abs(s - 1.0) > 1e-6)
        throw std::invalid_argument("prediction row " + std::to_string(i) + " sums to " +
                                    std::to_string(s));
      if (labels[static_cast<std::size_t>(i)] < 0 || labels[static_cast<std::size_t>(i)] >= classes)
        throw std::invalid_argument("label out of range");
    }
  }
};

struct RocPoint {
  double fpr, tpr;
};

struct PrPoint {
  double recall, precision;
};

struct MetricReport {
  double accuracy = 0;
  double f1_macro = 0;
  double ap_micro = 0;   // headline AP
  double ap_macro = 0;   // stored alongside for auditability
  double auc_micro = 0;  // mAUC
  double auc_macro = 0;  // MAUC
  std::vector<std::vector<int>> confusion;  // [true][pred]
  std::vector<double> precision_per_class, recall_per_class;
  std::vector<double> topk;  // topk[k-1] = top-(k) accuracy
  std::vector<RocPoint> roc_micro;
  std::vector<PrPoint> pr_micro;
  std::vector<std::string> warnings;
};

// ---------------------------------------------------------------------------

inline int argmax_row(const PredictionSet& p, int i) {
  int best = 0;
  for (int c = 1; c < p.classes; ++c)
    if (p.at(i, c) > p.at(i, best)) best = c;
  return best;
}

inline std::vector<std::vector<int>> confusion_matrix(const PredictionSet& p) {
  if (p.n < 1) throw std::invalid_argument("confusion matrix of an empty prediction set");
  std::vector<std::vector<int>> m(static_cast<std::size_t>(p.classes),
                                  std::vector<int>(static_cast<std::size_t>(p.classes), 0));
  for (int i = 0; i < p.n; ++i)
    m[static_cast<std::size_t>(p.labels[static_cast<std::size_t>(i)])]
     [static_cast<std::size_t>(argmax_row(p, i))]++;
  return m;
}

inline double accuracy_of(const std::vector<std::vector<int>>& confusion, int n) {
  long trace = 0;
  for (std::size_t c = 0; c < confusion.size(); ++c) trace += confusion[c][c];
  return static_cast<double>(trace) / n;
}

// Unweighted mean over classes of 2PR/(P+R); zero-support or zero-denominator
// classes contribute 0.
inline double f1_macro_of(const std::vector<std::vector<int>>& confusion) {
  const int c = static_cast<int>(confusion.size());
  double sum = 0;
  for (int k = 0; k < c; ++k) {
    long tp = confusion[static_cast<std::size_t>(k)][static_cast<std::size_t>(k)];
    long fn = 0, fp = 0;
    for (int j = 0; j < c; ++j) {
      if (j != k) {
        fn += confusion[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)];
        fp += confusion[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)];
      }
    }
    const double p = tp + fp ? static_cast<double>(tp) / (tp + fp) : 0.0;
    const double r = tp + fn ? static_cast<double>(tp) / (tp + fn) : 0.0;
    sum += (p + r > 0) ? 2.0 * p * r / (p + r) : 0.0;
  }
  return sum / c;
}

namespace metricdetail {

struct ScoredLabel {
  double score;
  bool positive;
};

// Exact AUC: concordant pairs plus half the score ties, over all pos/neg
// pairs. Sums stay integer multiples of 0.5, so the result is bit-identical
// to direct pair counting.
inline double binary_auc(std::vector<ScoredLabel> items, bool* valid = nullptr) {
  std::int64_t n1 = 0;
  for (const auto& it : items) n1 += it.positive;
  const std::int64_t n0 = static_cast<std::int64_t>(items.size()) - n1;
  if (n1 == 0 || n0 == 0) {
    if (valid) *valid = false;
    return 0.5;
  }
  if (valid) *valid = true;
  std::sort(items.begin(), items.end(),
            [](const ScoredLabel& a, const ScoredLabel& b) { return a.score > b.score; });
  std::int64_t concordant2 = 0;  // doubled counts keep everything integral
  std::int64_t negs_seen = 0;
  std::size_t i = 0;
  while (i < items.size()) {
    std::size_t j = i;
    std::int64_t pos_g = 0, neg_g = 0;
    while (j < items.size() && items[j].score == items[i].score) {
      pos_g += items[j].positive;
      neg_g += !items[j].positive;
      ++j;
    }
    const std::int64_t negs_below = n0 - negs_seen - neg_g;
    concordant2 += 2 * pos_g * negs_below + pos_g * neg_g;
    negs_seen += neg_g;
    i = j;
  }
  return static_cast<double>(concordant2) / (2.0 * static_cast<double>(n1) * static_cast<double>(n0));
}

inline std::vector<RocPoint> roc_curve(std::vector<ScoredLabel> items) {
  std::int64_t n1 = 0;
  for (const auto& it : items) n1 += it.positive;
  const std::int64_t n0 = static_cast<std::int64_t>(items.size()) - n1;
  std::sort(items.begin(), items.end(),
            [](const ScoredLabel& a, const ScoredLabel& b) { return a.score > b.score; });
  std::vector<RocPoint> pts{{0.0, 0.0}};
  std::int64_t tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < items.size()) {
    std::size_t j = i;
    while (j < items.size() && items[j].score == items[i].score) {
      tp += items[j].positive;
      fp += !items[j].positive;
      ++j;
    }
    pts.push_back({n0 ? static_cast<double>(fp) / n0 : 0.0, n1 ? static_cast<double>(tp) / n1 : 0.0});
    i = j;
  }
  return pts;
}

// Stepwise AP: sum (R_i - R_{i-1}) * P_i over descending-score groups.
inline double average_precision(std::vector<ScoredLabel> items,
                                std::vector<PrPoint>* curve = nullptr) {
  std::int64_t n1 = 0;
  for (const auto& it : items) n1 += it.positive;
  if (n1 == 0) throw std::invalid_argument("average precision without positives");
  std::sort(items.begin(), items.end(),
            [](const ScoredLabel& a, const ScoredLabel& b) { return a.score > b.score; });
  if (curve) curve->push_back({0.0, 1.0});
  double ap = 0.0, prev_recall = 0.0;
  std::int64_t tp = 0, seen = 0;
  std::size_t i = 0;
  while (i < items.size()) {
    std::size_t j = i;
    while (j < items.size() && items[j].score == items[i].score) {
      tp += items[j].positive;
      ++seen, ++j;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(n1);
    const double precision = static_cast<double>(tp) / static_cast<double>(seen);
    ap += (recall - prev_recall) * precision;
    if (curve) curve->push_back({recall, precision});
    prev_recall = recall;
    i = j;
  }
  return ap;
}

inline std::vector<ScoredLabel> pooled(const PredictionSet& p) {
  std::vector<ScoredLabel> items;
  items.reserve(static_cast<std::size_t>(p.n) * p.classes);
  for (int i = 0; i < p.n; ++i)
    for (int c = 0; c < p.classes; ++c)
      items.push_back({p.at(i, c), p.labels[static_cast<std::size_t>(i)] == c});
  return items;
}

inline std::vector<ScoredLabel> one_vs_rest(const PredictionSet& p, int cls) {
  std::vector<ScoredLabel> items;
  items.reserve(static_cast<std::size_t>(p.n));
  for (int i = 0; i < p.n; ++i)
    items.push_back({p.at(i, cls), p.labels[static_cast<std::size_t>(i)] == cls});
  return items;
}

}  // namespace metricdetail

enum class AucAveraging { kMicro, kMacro };

inline double roc_auc(const PredictionSet& p, AucAveraging avg,
                      std::vector<std::string>* warnings = nullptr) {
  if (avg == AucAveraging::kMicro) return metricdetail::binary_auc(metricdetail::pooled(p));
  double sum = 0;
  int used = 0;
  for (int c = 0; c < p.classes; ++c) {
    bool valid = false;
    const double auc = metricdetail::binary_auc(metricdetail::one_vs_rest(p, c), &valid);
    if (valid) {
      sum += auc;
      ++used;
    } else if (warnings) {
      warnings->push_back(std::string("macro AUC: class ") + class_name(c) +
                          " lacks positives or negatives, skipped");
    }
  }
  if (used == 0) throw std::invalid_argument("macro AUC: no class has both outcomes");
  return sum / used;
}

// Hit iff the true label is among the k highest probabilities; probability
// ties break toward the lower class index.
inline double topk_accuracy(const PredictionSet& p, int k) {
  if (k < 1 || k > p.classes) throw std::invalid_argument("top-k: k out of range");
  int hits = 0;
  for (int i = 0; i < p.n; ++i) {
    std::array<int, kNumClasses> order;
    for (int c = 0; c < p.classes; ++c) order[static_cast<std::size_t>(c)] = c;
    std::stable_sort(order.begin(), order.begin() + p.classes,
                     [&](int a, int b) { return p.at(i, a) > p.at(i, b); });
    for (int j = 0; j < k; ++j)
      if (order[static_cast<std::size_t>(j)] == p.labels[static_cast<std::size_t>(i)]) {
        ++hits;
        break;
      }
  }
  return static_cast<double>(hits) / p.n;
}

// Softmax-probability averaging over aligned prediction sets.
inline PredictionSet ensemble(const std::vector<const PredictionSet*>& sets) {
  if (sets.empty()) throw std::invalid_argument("ensemble of zero sets");
  PredictionSet out = *sets[0];
  for (std::size_t s = 1; s < sets.size(); ++s) {
    const PredictionSet& p = *sets[s];
    if (p.n != out.n || p.classes != out.classes || p.labels != out.labels)
      throw std::invalid_argument("ensemble: prediction sets misaligned");
    for (std::size_t i = 0; i < out.probs.size(); ++i) out.probs[i] += p.probs[i];
  }
  const double inv = 1.0 / static_cast<double>(sets.size());
  for (auto& v : out.probs) v *= inv;
  out.model_tag = "ensemble";
  return out;
}

inline MetricReport evaluate(const PredictionSet& p) {
  p.validate();
  MetricReport r;
  r.confusion = confusion_matrix(p);
  r.accuracy = accuracy_of(r.confusion, p.n);
  r.f1_macro = f1_macro_of(r.confusion);
  r.precision_per_class.resize(static_cast<std::size_t>(p.classes));
  r.recall_per_class.resize(static_cast<std::size_t>(p.classes));
  for (int c = 0; c < p.classes; ++c) {
    long tp = r.confusion[static_cast<std::size_t>(c)][static_cast<std::size_t>(c)], fp = 0, fn = 0;
    for (int j = 0; j < p.classes; ++j)
      if (j != c) {
        fp += r.confusion[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)];
        fn += r.confusion[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)];
      }
    r.precision_per_class[static_cast<std::size_t>(c)] = tp + fp ? static_cast<double>(tp) / (tp + fp) : 0.0;
    r.recall_per_class[static_cast<std::size_t>(c)] = tp + fn ? static_cast<double>(tp) / (tp + fn) : 0.0;
  }
  r.auc_micro = roc_auc(p, AucAveraging::kMicro);
  r.auc_macro = roc_auc(p, AucAveraging::kMacro, &r.warnings);
  auto pooled = metricdetail::pooled(p);
  r.ap_micro = metricdetail::average_precision(pooled, &r.pr_micro);
  {
    double sum = 0;
    int used = 0;
    for (int c = 0; c < p.classes; ++c) {
      auto ovr = metricdetail::one_vs_rest(p, c);
      bool has_pos = false;
      for (const auto& it : ovr) has_pos |= it.positive;
      if (!has_pos) continue;
      sum += metricdetail::average_precision(ovr);
      ++used;
    }
    r.ap_macro = used ? sum / used : 0.0;
  }
  r.roc_micro = metricdetail::roc_curve(std::move(pooled));
  for (int k = 1; k <= p.classes; ++k) r.topk.push_back(topk_accuracy(p, k));
  return r;
}

// "81.96±2.71" style formatting of a mean and sample std, both optionally
// scaled to percent.
inline std::string format_mean_std(double mean, double std, bool percent, int digits = 2) {
  char buf[64];
  const double scale = percent ? 100.0 : 1.0;
  std::snprintf(buf, sizeof(buf), "%.*f±%.*f", digits, mean * scale, digits, std * scale);
  return buf;
}

struct Aggregate {
  double mean = 0, std = 0;
  std::vector<double> values;

  static Aggregate of(const std::vector<double>& vals) {
    Aggregate a;
    a.values = vals;
    for (double v : vals) a.mean += v;
    a.mean /= static_cast<double>(vals.size());
    if (vals.size() > 1) {
      double acc = 0;
      for (double v : vals) acc += (v - a.mean) * (v - a.mean);
      a.std = std::sqrt(acc / static_cast<double>(vals.size() - 1));
    }
    return a;
  }
};

}  // namespace stshare
