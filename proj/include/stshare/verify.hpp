#pragma once

#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "stshare/gradcheck.hpp"
#include "stshare/models.hpp"

namespace stshare {

// Verification harness behind the `shapes` and `gradcheck` commands and the
// acceptance suite: junction-shape conformance against the published tables
// and central-finite-difference integrity for every layer and every
// assembled model.

struct VerifyItem {
  std::string name;
  bool pass = false;
  double value = 0.0;  // max relative error, or shape mismatch count
  std::string detail;
};

inline const ModelKind kAllModelKinds[] = {ModelKind::kBaseline, ModelKind::kCiv3dBilstm,
                                           ModelKind::kCiv3dMha, ModelKind::kSrs, ModelKind::kCrs};

// --------------------------------------------------------------------------
// Junction shapes vs the published per-module output sizes.
// --------------------------------------------------------------------------

inline std::vector<VerifyItem> verify_shape_traces(ModelKind kind) {
  ModelConfig cfg;
  cfg.kind = kind;
  cfg.sharing = true;
  auto net = Network<float>::assemble(cfg);
  const auto trace = net.shape_trace();
  const auto want = reference_trace(kind);
  std::vector<VerifyItem> items;
  for (std::size_t i = 0; i < want.size(); ++i) {
    VerifyItem item;
    item.name = std::string(model_name(kind)) + " module " + std::to_string(i + 1);
    const bool ok = i < trace.size() && trace[i] == want[i];
    item.pass = ok;
    item.detail = "got " + (i < trace.size() ? shape_str(trace[i]) : std::string("<missing>")) +
                  ", reference " + shape_str(want[i]);
    items.push_back(std::move(item));
  }
  return items;
}

inline std::vector<VerifyItem> verify_all_shape_traces() {
  std::vector<VerifyItem> items;
  for (ModelKind kind : kAllModelKinds) {
    auto part = verify_shape_traces(kind);
    items.insert(items.end(), part.begin(), part.end());
  }
  return items;
}

// --------------------------------------------------------------------------
// Layer-level gradient integrity at rtol 1e-4, eps 1e-4, float64, across
// `seeds` random configurations per layer.
// --------------------------------------------------------------------------

namespace verifydetail {

inline VerifyItem run_layer_check(const std::string& name, int seeds, double rtol,
                                  const std::function<GradCheckReport(std::uint64_t)>& build) {
  VerifyItem item;
  item.name = name;
  item.pass = true;
  for (int s = 0; s < seeds; ++s) {
    auto report = grad_check_resampled(build, rtol, mix_seed(hash_str(name), static_cast<std::uint64_t>(s)));
    item.value = std::max(item.value, report.max_rel_err);
    if (!report.pass(rtol)) {
      item.pass = false;
      item.detail = "seed " + std::to_string(s) + " max rel err " + std::to_string(report.max_rel_err);
    }
  }
  if (item.pass) {
    std::ostringstream os;
    os << "max rel err " << item.value << " over " << seeds << " seeds";
    item.detail = os.str();
  }
  return item;
}

}  // namespace verifydetail

inline std::vector<VerifyItem> verify_layer_gradients(int seeds = 20, double rtol = 1e-4,
                                                      double eps = 1e-4) {
  std::vector<VerifyItem> items;
  const RunCtx ctx{17, 0};

  items.push_back(verifydetail::run_layer_check("conv3d", seeds, rtol, [&](std::uint64_t s) {
    Rng rng(s);
    const int strides[4][3] = {{1, 1, 1}, {1, 2, 2}, {2, 2, 2}, {2, 4, 4}};
    const auto& st = strides[rng.next_index(4)];
    const int k = 1 + 2 * static_cast<int>(rng.next_index(3));  // 1, 3, 5
    const Padding pad = rng.next_double() < 0.8 || k > 4 ? Padding::kSame : Padding::kValid;
    Parameter<double> x("x", Tensor<double>::uniform({2, 4, 6, 6, 2}, -1.0, 1.0, rng));
    Parameter<double> kern("k", Tensor<double>::uniform({k, k, k, 2, 3}, -0.5, 0.5, rng));
    Parameter<double> b("b", Tensor<double>::uniform({3}, -0.1, 0.1, rng));
    auto loss = [&, st, pad](Tape<double>& t) {
      Var y = conv3d(t, t.leaf(x), t.leaf(kern), t.leaf(b), Stride3{st[0], st[1], st[2]}, pad);
      return reduce_sum_all(t, mul(t, y, tanh_op(t, y)));
    };
    return grad_check(loss, {&x, &kern, &b}, eps);
  }));

  items.push_back(verifydetail::run_layer_check("pool3d", seeds, rtol, [&](std::uint64_t s) {
    Rng rng(s);
    const Pool kind = rng.next_double() < 0.5 ? Pool::kMax : Pool::kAvg;
    const int stride = 1 + static_cast<int>(rng.next_index(2));
    Parameter<double> x("x", Tensor<double>::uniform({2, 4, 5, 5, 2}, -1.0, 1.0, rng));
    auto loss = [&, kind, stride](Tape<double>& t) {
      Var y = pool3d(t, t.leaf(x), kind, {2, 2, 2}, {stride, stride, stride}, Padding::kSame);
      return reduce_sum_all(t, mul(t, y, y));
    };
    return grad_check(loss, {&x}, eps);
  }));

  items.push_back(verifydetail::run_layer_check("adaptive_pool", seeds, rtol, [&](std::uint64_t s) {
    Rng rng(s);
    Parameter<double> x("x", Tensor<double>::uniform({1, 4, 7, 9, 2}, -1.0, 1.0, rng));
    const int ot = 1 + static_cast<int>(rng.next_index(4));
    const int oh = 2 + static_cast<int>(rng.next_index(9));
    const int ow = 2 + static_cast<int>(rng.next_index(9));
    auto loss = [&, ot, oh, ow](Tape<double>& t) {
      Var y = adaptive_avg_pool3d(t, t.leaf(x), ot, oh, ow);
      return reduce_sum_all(t, mul(t, y, y));
    };
    return grad_check(loss, {&x}, eps);
  }));

  items.push_back(verifydetail::run_layer_check("batchnorm", seeds, rtol, [&](std::uint64_t s) {
    Rng rng(s);
    BatchNormLayer<double> bn("bn", 3);
    bn.gamma().value = Tensor<double>::uniform({3}, 0.5, 1.5, rng);
    bn.beta().value = Tensor<double>::uniform({3}, -0.5, 0.5, rng);
    Parameter<double> x("x", Tensor<double>::uniform({3, 2, 3, 3, 3}, -2.0, 2.0, rng));
    auto r = Tensor<double>::uniform({3, 2, 3, 3, 3}, -1.0, 1.0, rng);
    ParamVec<double> ps;
    bn.collect(ps);
    ps.push_back(&x);
    auto loss = [&, r](Tape<double>& t) {
      Var y = bn.forward(t, t.leaf(x), Mode::kTrain);
      return reduce_sum_all(t, mul(t, y, mul(t, t.constant(r), tanh_op(t, y))));
    };
    return grad_check(loss, ps, eps);
  }));

  items.push_back(verifydetail::run_layer_check("dense", seeds, rtol, [&](std::uint64_t s) {
    Rng rng(s);
    DenseLayer<double> d("fc", 4, 3, rng);
    Parameter<double> x("x", Tensor<double>::uniform({5, 4}, -1.0, 1.0, rng));
    ParamVec<double> ps;
    d.collect(ps);
    ps.push_back(&x);
    auto loss = [&](Tape<double>& t) {
      Var y = d.forward(t, t.leaf(x));
      return reduce_sum_all(t, mul(t, y, sigmoid(t, y)));
    };
    return grad_check(loss, ps, eps);
  }));

  items.push_back(verifydetail::run_layer_check("softmax_xent", seeds, rtol, [&](std::uint64_t s) {
    Rng rng(s);
    Parameter<double> x("x", Tensor<double>::uniform({4, 8}, -2.0, 2.0, rng));
    std::vector<int> labels;
    std::vector<double> w;
    for (int i = 0; i < 4; ++i) labels.push_back(static_cast<int>(rng.next_index(8)));
    for (int c = 0; c < 8; ++c) w.push_back(rng.uniform(0.5, 2.0));
    auto loss = [&, labels, w](Tape<double>& t) {
      return weighted_cross_entropy(t, softmax(t, t.leaf(x)), labels, w);
    };
    return grad_check(loss, {&x}, eps);
  }));

  items.push_back(verifydetail::run_layer_check("attention", seeds, rtol, [&](std::uint64_t s) {
    Rng rng(s);
    const int heads = 1 + static_cast<int>(rng.next_index(2));
    AttentionBlock<double> blk("attn", 4, heads, rng);
    Parameter<double> x("x", Tensor<double>::uniform({2, 3, 4}, -1.0, 1.0, rng));
    ParamVec<double> ps;
    blk.collect(ps);
    ps.push_back(&x);
    auto loss = [&](Tape<double>& t) {
      Var y = blk.forward(t, t.leaf(x), Mode::kTrain);
      return reduce_sum_all(t, mul(t, y, y));
    };
    return grad_check(loss, ps, eps, 16, s);
  }));

  items.push_back(verifydetail::run_layer_check("bilstm", seeds, rtol, [&](std::uint64_t s) {
    Rng rng(s);
    BiLSTMLayer<double> lstm("lstm", 3, 4, rng);
    Parameter<double> x("x", Tensor<double>::uniform({2, 4, 3}, -1.0, 1.0, rng));
    ParamVec<double> ps;
    lstm.collect(ps);
    ps.push_back(&x);
    auto loss = [&](Tape<double>& t) {
      auto out = lstm.forward(t, t.leaf(x));
      return add(t, reduce_sum_all(t, mul(t, out.seq, out.seq)),
                 reduce_sum_all(t, mul(t, out.final_state, out.final_state)));
    };
    return grad_check(loss, ps, eps, 24, s);
  }));

  items.push_back(verifydetail::run_layer_check("dropout", seeds, rtol, [&](std::uint64_t s) {
    Rng rng(s);
    DropoutLayer<double> d("drop", 0.2);
    Parameter<double> x("x", Tensor<double>::uniform({64}, -1.0, 1.0, rng));
    RunCtx fixed{s, 3};
    auto loss = [&, fixed](Tape<double>& t) {
      Var y = d.forward(t, t.leaf(x), Mode::kTrain, fixed);
      return reduce_sum_all(t, mul(t, y, y));
    };
    return grad_check(loss, {&x}, eps);
  }));

  items.push_back(verifydetail::run_layer_check("matmul_reduce", seeds, rtol, [&](std::uint64_t s) {
    Rng rng(s);
    Parameter<double> a("a", Tensor<double>::uniform({2, 3, 4}, -1.0, 1.0, rng));
    Parameter<double> b("b", Tensor<double>::uniform({2, 4, 2}, -1.0, 1.0, rng));
    auto loss = [&](Tape<double>& t) {
      Var y = matmul(t, t.leaf(a), t.leaf(b));
      Var m = reduce(t, Reduce::kMax, y, {1});
      Var sm = reduce(t, Reduce::kMean, mul(t, y, y), {0, 2});
      return add(t, reduce_sum_all(t, m), reduce_sum_all(t, sm));
    };
    return grad_check(loss, {&a, &b}, eps);
  }));

  return items;
}

// --------------------------------------------------------------------------
// Full-model gradient integrity at 1/8 width, rtol 1e-3, float64.
// --------------------------------------------------------------------------

inline std::vector<VerifyItem> verify_model_gradients(double rtol = 1e-3, double eps = 1e-4) {
  std::vector<VerifyItem> items;
  for (ModelKind kind : kAllModelKinds) {
    for (bool sharing : {true, false}) {
      ModelConfig cfg;
      cfg.kind = kind;
      cfg.sharing = sharing;
      cfg.t = 8;
      cfg.h = 16;
      cfg.w = 16;
      cfg.width_scale = 0.125;
      auto build = [&](std::uint64_t seed) {
        auto net = Network<double>::assemble(cfg);
        auto params = net.params();
        Rng rng(seed);
        auto rgb = Tensor<double>::uniform({2, 8, 16, 16, 3}, 0.0, 1.0, rng);
        auto flow = Tensor<double>::uniform({2, 8, 16, 16, 2}, -1.0, 1.0, rng);
        std::vector<int> labels{static_cast<int>(seed % 8), static_cast<int>((seed + 5) % 8)};
        std::vector<double> w(8, 1.0);
        RunCtx ctx{seed, 0};
        auto loss = [&, rgb, flow, labels, w, ctx](Tape<double>& t) {
          auto out = net.forward(t, t.constant(rgb), t.constant(flow), Mode::kTrain, ctx);
          return weighted_cross_entropy(t, out.probs, labels, w);
        };
        return grad_check(loss, params, eps, 3, mix_seed(seed, 99));
      };
      VerifyItem item;
      item.name = std::string(model_name(kind)) + (sharing ? "/sharing" : "/standalone");
      auto report = grad_check_resampled(build, rtol,
                                         mix_seed(0xf00d, hash_str(item.name)));
      item.pass = report.pass(rtol);
      item.value = report.max_rel_err;
      std::ostringstream os;
      os << "max rel err " << report.max_rel_err << " (1/8 width, float64)";
      item.detail = os.str();
      items.push_back(std::move(item));
    }
  }
  return items;
}

inline bool all_pass(const std::vector<VerifyItem>& items) {
  for (const auto& i : items)
    if (!i.pass) return false;
  return true;
}

}  // namespace stshare
