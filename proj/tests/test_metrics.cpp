#include <gtest/gtest.h>

#include <cmath>

#include "stshare/metrics.hpp"
#include "stshare/rng.hpp"

namespace stshare {
namespace {

PredictionSet one_hot_preds(const std::vector<int>& predicted, const std::vector<int>& truth) {
  PredictionSet p;
  p.n = static_cast<int>(truth.size());
  p.labels = truth;
  p.probs.assign(static_cast<std::size_t>(p.n) * kNumClasses, 0.0);
  for (int i = 0; i < p.n; ++i)
    p.probs[static_cast<std::size_t>(i * kNumClasses + predicted[static_cast<std::size_t>(i)])] = 1.0;
  return p;
}

PredictionSet random_preds(int n, std::uint64_t seed, bool informative) {
  Rng rng(seed);
  PredictionSet p;
  p.n = n;
  p.probs.resize(static_cast<std::size_t>(n) * kNumClasses);
  for (int i = 0; i < n; ++i) {
    p.labels.push_back(static_cast<int>(rng.next_index(kNumClasses)));
    double sum = 0;
    for (int c = 0; c < kNumClasses; ++c) {
      double v = rng.uniform(0.01, 1.0);
      if (informative && c == p.labels.back()) v += 1.5;
      p.probs[static_cast<std::size_t>(i * kNumClasses + c)] = v;
      sum += v;
    }
    for (int c = 0; c < kNumClasses; ++c) p.probs[static_cast<std::size_t>(i * kNumClasses + c)] /= sum;
  }
  return p;
}

TEST(Confusion, PerfectPredictionsDiagonal) {
  std::vector<int> truth{0, 1, 2, 3, 4, 5, 6, 7, 3, 3};
  auto p = one_hot_preds(truth, truth);
  auto m = confusion_matrix(p);
  EXPECT_DOUBLE_EQ(accuracy_of(m, p.n), 1.0);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j)
      if (i != j) EXPECT_EQ(m[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)], 0);
}

TEST(Confusion, AllIntoOneClassSingleColumn) {
  std::vector<int> truth{0, 1, 2, 3};
  std::vector<int> pred{5, 5, 5, 5};
  auto m = confusion_matrix(one_hot_preds(pred, truth));
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j)
      EXPECT_EQ(m[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] != 0, j == 5 && i <= 3);
}

TEST(Confusion, TenSampleHandTally) {
  std::vector<int> truth{0, 0, 1, 1, 2, 2, 3, 3, 4, 4};
  std::vector<int> pred{0, 1, 1, 1, 2, 0, 3, 4, 4, 4};
  auto p = one_hot_preds(pred, truth);
  auto m = confusion_matrix(p);
  EXPECT_EQ(m[0][0], 1);
  EXPECT_EQ(m[0][1], 1);
  EXPECT_EQ(m[1][1], 2);
  EXPECT_EQ(m[2][2], 1);
  EXPECT_EQ(m[2][0], 1);
  EXPECT_EQ(m[3][3], 1);
  EXPECT_EQ(m[3][4], 1);
  EXPECT_EQ(m[4][4], 2);
  EXPECT_DOUBLE_EQ(accuracy_of(m, 10), 0.7);
  // Matrix total equals N; row sums equal per-class support.
  int total = 0;
  for (auto& row : m)
    for (int v : row) total += v;
  EXPECT_EQ(total, 10);
}

TEST(F1Macro, PerfectIsOne) {
  std::vector<int> truth{0, 1, 2, 3, 4, 5, 6, 7};
  EXPECT_DOUBLE_EQ(f1_macro_of(confusion_matrix(one_hot_preds(truth, truth))), 1.0);
}

TEST(F1Macro, OneClassAlwaysWrongHandValue) {
  // Classes 0..6 perfect (2 samples each); class 7 always predicted as 0.
  std::vector<int> truth, pred;
  for (int c = 0; c < 8; ++c)
    for (int r = 0; r < 2; ++r) {
      truth.push_back(c);
      pred.push_back(c == 7 ? 0 : c);
    }
  const double got = f1_macro_of(confusion_matrix(one_hot_preds(pred, truth)));
  // Class 0: P = 2/4, R = 1 -> F1 = 2/3; classes 1..6: F1 = 1; class 7: 0.
  const double want = (2.0 / 3.0 + 6.0 * 1.0 + 0.0) / 8.0;
  EXPECT_NEAR(got, want, 1e-12);
}

TEST(F1Macro, InvariantUnderClassRelabeling) {
  Rng rng(4);
  auto p = random_preds(60, 17, true);
  const double base = f1_macro_of(confusion_matrix(p));
  // Apply a fixed permutation to both labels and prob columns.
  const int perm[8] = {3, 0, 7, 1, 5, 2, 6, 4};
  PredictionSet q = p;
  for (int i = 0; i < p.n; ++i) {
    q.labels[static_cast<std::size_t>(i)] = perm[p.labels[static_cast<std::size_t>(i)]];
    for (int c = 0; c < 8; ++c)
      q.probs[static_cast<std::size_t>(i * 8 + perm[c])] = p.probs[static_cast<std::size_t>(i * 8 + c)];
  }
  EXPECT_NEAR(f1_macro_of(confusion_matrix(q)), base, 1e-12);
}

// Brute-force pair-counting oracle: P(score+ > score-) + 0.5 P(=).
double pair_count_auc(const std::vector<double>& scores, const std::vector<int>& binary) {
  double acc = 0;
  long n1 = 0, n0 = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!binary[i]) continue;
    ++n1;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (binary[j]) continue;
      if (scores[i] > scores[j]) acc += 1.0;
      else if (scores[i] == scores[j]) acc += 0.5;
    }
  }
  for (std::size_t j = 0; j < scores.size(); ++j) n0 += !binary[j];
  return acc / (static_cast<double>(n1) * static_cast<double>(n0));
}

TEST(RocAuc, PerfectSeparabilityIsOne) {
  auto p = one_hot_preds({0, 1, 2, 3, 4, 5, 6, 7}, {0, 1, 2, 3, 4, 5, 6, 7});
  EXPECT_DOUBLE_EQ(roc_auc(p, AucAveraging::kMicro), 1.0);
  EXPECT_DOUBLE_EQ(roc_auc(p, AucAveraging::kMacro), 1.0);
}

TEST(RocAuc, UninformativeScoresNearHalf) {
  auto p = random_preds(2000, 99, false);
  EXPECT_NEAR(roc_auc(p, AucAveraging::kMicro), 0.5, 0.05);
  EXPECT_NEAR(roc_auc(p, AucAveraging::kMacro), 0.5, 0.05);
}

TEST(RocAuc, EightSampleHandCaseMatchesPairCounting) {
  PredictionSet p = random_preds(8, 7, true);
  std::vector<double> scores;
  std::vector<int> binary;
  for (int i = 0; i < 8; ++i)
    for (int c = 0; c < 8; ++c) {
      scores.push_back(p.at(i, c));
      binary.push_back(p.labels[static_cast<std::size_t>(i)] == c);
    }
  EXPECT_EQ(roc_auc(p, AucAveraging::kMicro), pair_count_auc(scores, binary));
}

TEST(RocAuc, ExactlyEqualsPairCountingOracleUpTo200) {
  for (std::uint64_t seed = 0; seed < 24; ++seed) {
    const int n = 10 + static_cast<int>(seed) * 8;  // up to 194
    auto p = random_preds(n, mix_seed(1000, seed), seed % 2 == 0);
    // Quantize scores so ties actually occur.
    for (auto& v : p.probs) v = std::round(v * 32.0) / 32.0;
    std::vector<double> scores;
    std::vector<int> binary;
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < 8; ++c) {
        scores.push_back(p.at(i, c));
        binary.push_back(p.labels[static_cast<std::size_t>(i)] == c);
      }
    EXPECT_EQ(roc_auc(p, AucAveraging::kMicro), pair_count_auc(scores, binary)) << "seed " << seed;
  }
}

TEST(RocAuc, AbsentClassSkippedWithWarning) {
  auto p = random_preds(40, 5, true);
  for (auto& l : p.labels)
    if (l == 7) l = 0;  // class 7 has no ground-truth positives
  std::vector<std::string> warnings;
  const double auc = roc_auc(p, AucAveraging::kMacro, &warnings);
  EXPECT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("walk"), std::string::npos);
  EXPECT_GE(auc, 0.0);
  EXPECT_LE(auc, 1.0);

  // Single-class truth leaves no usable one-vs-rest problem at all.
  for (auto& l : p.labels) l = 3;
  EXPECT_THROW(roc_auc(p, AucAveraging::kMacro), std::invalid_argument);
}

TEST(RocCurve, MonotoneInSweptThreshold) {
  auto p = random_preds(50, 21, true);
  auto r = evaluate(p);
  for (std::size_t i = 1; i < r.roc_micro.size(); ++i) {
    EXPECT_GE(r.roc_micro[i].fpr, r.roc_micro[i - 1].fpr);
    EXPECT_GE(r.roc_micro[i].tpr, r.roc_micro[i - 1].tpr);
  }
  for (std::size_t i = 1; i < r.pr_micro.size(); ++i)
    EXPECT_GE(r.pr_micro[i].recall, r.pr_micro[i - 1].recall);
}

TEST(AveragePrecision, PerfectIsOne) {
  auto p = one_hot_preds({0, 1, 2, 3, 4, 5, 6, 7}, {0, 1, 2, 3, 4, 5, 6, 7});
  EXPECT_DOUBLE_EQ(evaluate(p).ap_micro, 1.0);
}

TEST(AveragePrecision, PositivesLastHandCase) {
  // Four samples, binary-style scores where every true class gets the lowest
  // score: ranking is all negatives first. For N=4 one-vs-rest decisions,
  // positives occupy the last 4 of 32 slots as one tied group.
  PredictionSet p;
  p.n = 4;
  p.labels = {0, 1, 2, 3};
  p.probs.assign(32, 0.0);
  for (int i = 0; i < 4; ++i)
    for (int c = 0; c < 8; ++c)
      p.probs[static_cast<std::size_t>(i * 8 + c)] = (c == p.labels[static_cast<std::size_t>(i)]) ? 0.01 : 0.99 / 7.0;
  // Pooled: 4 positives at score 0.01, 28 negatives at ~0.1414; positives
  // form the tail group: AP = (1 - 0) * (4/32) = prevalence at the tail.
  auto r = evaluate(p);
  EXPECT_NEAR(r.ap_micro, 4.0 / 32.0, 1e-12);
}

TEST(AveragePrecision, InvariantToMonotoneScoreTransforms) {
  auto p = random_preds(40, 31, true);
  auto base = evaluate(p).ap_micro;
  PredictionSet q = p;
  for (auto& v : q.probs) v = std::tanh(2.0 * v);  // strictly monotone
  // Rows no longer sum to 1, so compute AP directly on pooled scores.
  auto items_p = metricdetail::pooled(p);
  auto items_q = metricdetail::pooled(q);
  EXPECT_NEAR(metricdetail::average_precision(items_q), base, 1e-12);
  EXPECT_NEAR(metricdetail::average_precision(items_p), base, 1e-12);
}

TEST(Ensemble, IdenticalMembersReproduceSingleModel) {
  auto p = random_preds(30, 41, true);
  auto combined = ensemble({&p, &p, &p});
  for (std::size_t i = 0; i < p.probs.size(); ++i) EXPECT_DOUBLE_EQ(combined.probs[i], p.probs[i]);
  auto ra = evaluate(p);
  auto rb = evaluate(combined);
  EXPECT_DOUBLE_EQ(ra.accuracy, rb.accuracy);
  EXPECT_DOUBLE_EQ(ra.auc_micro, rb.auc_micro);
  EXPECT_DOUBLE_EQ(ra.ap_micro, rb.ap_micro);
  EXPECT_DOUBLE_EQ(ra.f1_macro, rb.f1_macro);
}

TEST(Ensemble, DisagreeingOneHotsAverageToHalf) {
  auto a = one_hot_preds({0, 2}, {0, 1});
  auto b = one_hot_preds({1, 2}, {0, 1});
  auto e = ensemble({&a, &b});
  EXPECT_DOUBLE_EQ(e.at(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(e.at(0, 1), 0.5);
  EXPECT_DOUBLE_EQ(e.at(1, 2), 1.0);
  double s = 0;
  for (int c = 0; c < 8; ++c) s += e.at(0, c);
  EXPECT_DOUBLE_EQ(s, 1.0);
}

TEST(Ensemble, MisalignedSetsThrow) {
  auto a = one_hot_preds({0}, {0});
  auto b = one_hot_preds({0, 1}, {0, 1});
  EXPECT_THROW(ensemble({&a, &b}), std::invalid_argument);
  auto c = one_hot_preds({0}, {1});  // same n, different ground truth
  EXPECT_THROW(ensemble({&a, &c}), std::invalid_argument);
}

TEST(TopK, BoundsAndArgmaxEquivalence) {
  auto p = random_preds(40, 51, true);
  EXPECT_DOUBLE_EQ(topk_accuracy(p, 8), 1.0);
  auto m = confusion_matrix(p);
  EXPECT_DOUBLE_EQ(topk_accuracy(p, 1), accuracy_of(m, p.n));
  EXPECT_THROW(topk_accuracy(p, 0), std::invalid_argument);
  EXPECT_THROW(topk_accuracy(p, 9), std::invalid_argument);
}

TEST(TopK, FiveSampleHandCase) {
  PredictionSet p;
  p.n = 5;
  p.labels = {2, 0, 7, 4, 1};
  p.probs.assign(40, 0.0);
  auto set_row = [&](int i, std::initializer_list<double> vals) {
    int c = 0;
    for (double v : vals) p.probs[static_cast<std::size_t>(i * 8 + c++)] = v;
  };
  set_row(0, {0.4, 0.3, 0.2, 0.1, 0, 0, 0, 0});    // label 2 is rank 3
  set_row(1, {0.5, 0.2, 0.1, 0.1, 0.1, 0, 0, 0});  // label 0 is rank 1
  set_row(2, {0.3, 0.3, 0.1, 0.1, 0.1, 0, 0, 0.1});// label 7 tied at rank 3..6
  set_row(3, {0.1, 0.1, 0.1, 0.1, 0.6, 0, 0, 0});  // label 4 is rank 1
  set_row(4, {0.6, 0.3, 0.1, 0, 0, 0, 0, 0});      // label 1 is rank 2
  EXPECT_DOUBLE_EQ(topk_accuracy(p, 1), 2.0 / 5.0);
  EXPECT_DOUBLE_EQ(topk_accuracy(p, 2), 3.0 / 5.0);
  // Row 2: ties at 0.1 break toward lower class indices, so class 7 lands at
  // rank 6 and needs k >= 6.
  EXPECT_DOUBLE_EQ(topk_accuracy(p, 3), 4.0 / 5.0);
  EXPECT_DOUBLE_EQ(topk_accuracy(p, 5), 4.0 / 5.0);
  EXPECT_DOUBLE_EQ(topk_accuracy(p, 6), 5.0 / 5.0);
}

TEST(Report, FormatMeanStd) {
  EXPECT_EQ(format_mean_std(0.8196, 0.0271, true), "81.96±2.71");
  EXPECT_EQ(format_mean_std(0.5515, 0.0026, false, 4), "0.5515±0.0026");
}

TEST(Report, AggregateZeroStdForIdenticalValues) {
  auto a = Aggregate::of({0.75, 0.75, 0.75, 0.75});
  EXPECT_DOUBLE_EQ(a.mean, 0.75);
  EXPECT_DOUBLE_EQ(a.std, 0.0);
}

}  // namespace
}  // namespace stshare
