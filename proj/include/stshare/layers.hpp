#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "stshare/conv.hpp"
#include "stshare/ops.hpp"
#include "stshare/rng.hpp"
#include "stshare/tape.hpp"

namespace stshare {

enum class Mode { kTrain, kInfer };

// Per-forward execution context. Dropout randomness is derived from
// (run seed, layer name, step counter) so repeated runs are bit-identical and
// never touch a shared mutable generator.
struct RunCtx {
  std::uint64_t seed = 0;
  std::int64_t step = 0;
};

template <typename T>
using ParamVec = std::vector<Parameter<T>*>;

// Non-trainable layer state that checkpoints and best-epoch snapshots must
// carry (batch-norm running statistics).
template <typename T>
using StateVec = std::vector<std::pair<std::string, Tensor<T>*>>;

// y = x W (+ b), applied over the last axis of x.
template <typename T>
Var linear(Tape<T>& tape, Var x, Var w) {
  const Shape in = tape.shape(x);
  const int din = in.back();
  const auto& vw = tape.value(w);
  if (vw.rank() != 2 || vw.dim(0) != din)
    throw std::invalid_argument("linear: weight " + shape_str(vw.shape()) +
                                " does not match input " + shape_str(in));
  const int dout = vw.dim(1);
  const int rows = static_cast<int>(shape_numel(in) / static_cast<std::size_t>(din));
  Var flat = reshape(tape, x, {rows, din});
  Var y = matmul(tape, flat, w);
  Shape out = in;
  out.back() = dout;
  return reshape(tape, y, out);
}

// ---------------------------------------------------------------------------
// Conv3DLayer
// ---------------------------------------------------------------------------

template <typename T>
class Conv3DLayer {
 public:
  Conv3DLayer(const std::string& name, int kt, int kh, int kw, int cin, int cout, Stride3 stride,
              Padding padding, Rng& rng)
      : kernel_(name + ".kernel",
                Tensor<T>::he_normal({kt, kh, kw, cin, cout}, kt * kh * kw * cin, rng)),
        bias_(name + ".bias", Tensor<T>::zeros({cout})),
        stride_(stride),
        padding_(padding) {}

  Conv3DLayer(const std::string& name, int k, int cin, int cout, Stride3 stride, Padding padding,
              Rng& rng)
      : Conv3DLayer(name, k, k, k, cin, cout, stride, padding, rng) {}

  Var forward(Tape<T>& tape, Var x) {
    Var k = tape.leaf(kernel_);
    Var b = tape.leaf(bias_);
    return conv3d(tape, x, k, b, stride_, padding_);
  }

  Shape out_shape(const Shape& in) const {
    const auto& ks = kernel_.value.shape();
    ConvGeom g = detail::conv_geometry(in[1], in[2], in[3], ks[0], ks[1], ks[2], stride_, padding_);
    return {in[0], g.to, g.ho, g.wo, ks[4]};
  }

  // Forward multiply-accumulates.
  std::int64_t flops(const Shape& in) const {
    const auto& ks = kernel_.value.shape();
    const Shape out = out_shape(in);
    return shape_numel(out) * static_cast<std::int64_t>(ks[0]) * ks[1] * ks[2] * ks[3];
  }

  void collect(ParamVec<T>& ps) {
    ps.push_back(&kernel_);
    ps.push_back(&bias_);
  }

  int out_channels() const { return kernel_.value.shape()[4]; }
  Parameter<T>& kernel() { return kernel_; }
  Parameter<T>& bias() { return bias_; }
  Stride3 stride() const { return stride_; }

 private:
  Parameter<T> kernel_;  // [kT,kH,kW,Cin,Cout]
  Parameter<T> bias_;    // [Cout]
  Stride3 stride_;
  Padding padding_;
};

// ---------------------------------------------------------------------------
// BatchNormLayer, per-channel over all leading axes (channels last).
// ---------------------------------------------------------------------------

template <typename T>
class BatchNormLayer {
 public:
  BatchNormLayer(const std::string& name, int channels, double momentum = 0.1, double eps = 1e-5)
      : gamma_(name + ".gamma", Tensor<T>::ones({channels})),
        beta_(name + ".beta", Tensor<T>::zeros({channels})),
        running_mean_(Tensor<T>::zeros({channels})),
        running_var_(Tensor<T>::ones({channels})),
        momentum_(static_cast<T>(momentum)),
        eps_(static_cast<T>(eps)) {}

  Var forward(Tape<T>& tape, Var x, Mode mode) {
    const auto& vx = tape.value(x);
    const int c = vx.shape().back();
    if (gamma_.value.dim(0) != c)
      throw std::invalid_argument("batchnorm channel mismatch: layer C=" +
                                  std::to_string(gamma_.value.dim(0)) + ", input " +
                                  shape_str(vx.shape()));
    const std::size_t rows = vx.size() / static_cast<std::size_t>(c);
    Var g = tape.leaf(gamma_);
    Var b = tape.leaf(beta_);

    if (mode == Mode::kTrain) {
      if (vx.dim(0) < 2) throw std::invalid_argument("batchnorm train mode requires batch >= 2");
      // Batch statistics (biased variance, used for both normalization and
      // the running update).
      std::vector<T> mean(static_cast<std::size_t>(c), T(0));
      std::vector<T> var(static_cast<std::size_t>(c), T(0));
      const T* xd = vx.data();
      for (std::size_t r = 0; r < rows; ++r)
        for (int ch = 0; ch < c; ++ch) mean[static_cast<std::size_t>(ch)] += xd[r * c + ch];
      const T inv_rows = T(1) / static_cast<T>(rows);
      for (auto& m : mean) m *= inv_rows;
      for (std::size_t r = 0; r < rows; ++r)
        for (int ch = 0; ch < c; ++ch) {
          const T d = xd[r * c + ch] - mean[static_cast<std::size_t>(ch)];
          var[static_cast<std::size_t>(ch)] += d * d;
        }
      for (auto& v : var) v *= inv_rows;
      for (int ch = 0; ch < c; ++ch) {
        running_mean_[static_cast<std::size_t>(ch)] +=
            momentum_ * (mean[static_cast<std::size_t>(ch)] - running_mean_[static_cast<std::size_t>(ch)]);
        running_var_[static_cast<std::size_t>(ch)] +=
            momentum_ * (var[static_cast<std::size_t>(ch)] - running_var_[static_cast<std::size_t>(ch)]);
      }
      std::vector<T> inv_std(static_cast<std::size_t>(c));
      for (int ch = 0; ch < c; ++ch)
        inv_std[static_cast<std::size_t>(ch)] =
            T(1) / std::sqrt(var[static_cast<std::size_t>(ch)] + eps_);

      Tensor<T> out = Tensor<T>::uninit(vx.shape());
      const T* gd = gamma_.value.data();
      const T* bd = beta_.value.data();
      T* yd = out.data();
      for (std::size_t r = 0; r < rows; ++r)
        for (int ch = 0; ch < c; ++ch) {
          const std::size_t i = r * c + static_cast<std::size_t>(ch);
          yd[i] = gd[ch] * (xd[i] - mean[static_cast<std::size_t>(ch)]) *
                      inv_std[static_cast<std::size_t>(ch)] +
                  bd[ch];
        }
      const int cc = c;
      return tape.make(std::move(out), {x.id, g.id, b.id},
                       [x, g, b, mean = std::move(mean), inv_std = std::move(inv_std), rows,
                        cc](Tape<T>& t, int self) {
                         const auto& gy = t.grad(self);
                         const auto& vx = t.value(x);
                         const auto& vg = t.value(g);
                         const T inv_rows = T(1) / static_cast<T>(rows);
                         // Per-channel sums of gy and gy * xhat.
                         std::vector<T> sum_g(static_cast<std::size_t>(cc), T(0));
                         std::vector<T> sum_gx(static_cast<std::size_t>(cc), T(0));
                         for (std::size_t r = 0; r < rows; ++r)
                           for (int ch = 0; ch < cc; ++ch) {
                             const std::size_t i = r * cc + static_cast<std::size_t>(ch);
                             const T xhat = (vx[i] - mean[static_cast<std::size_t>(ch)]) *
                                            inv_std[static_cast<std::size_t>(ch)];
                             sum_g[static_cast<std::size_t>(ch)] += gy[i];
                             sum_gx[static_cast<std::size_t>(ch)] += gy[i] * xhat;
                           }
                         if (t.requires_grad(g)) {
                           auto& gg = t.grad(g);
                           for (int ch = 0; ch < cc; ++ch)
                             gg[static_cast<std::size_t>(ch)] += sum_gx[static_cast<std::size_t>(ch)];
                         }
                         if (t.requires_grad(b)) {
                           auto& gb = t.grad(b);
                           for (int ch = 0; ch < cc; ++ch)
                             gb[static_cast<std::size_t>(ch)] += sum_g[static_cast<std::size_t>(ch)];
                         }
                         if (t.requires_grad(x)) {
                           auto& gx = t.grad(x);
                           for (std::size_t r = 0; r < rows; ++r)
                             for (int ch = 0; ch < cc; ++ch) {
                               const std::size_t i = r * cc + static_cast<std::size_t>(ch);
                               const T xhat = (vx[i] - mean[static_cast<std::size_t>(ch)]) *
                                              inv_std[static_cast<std::size_t>(ch)];
                               gx[i] += vg[static_cast<std::size_t>(ch)] *
                                        inv_std[static_cast<std::size_t>(ch)] *
                                        (gy[i] - inv_rows * sum_g[static_cast<std::size_t>(ch)] -
                                         xhat * inv_rows * sum_gx[static_cast<std::size_t>(ch)]);
                             }
                         }
                       });
    }

    // Inference: pure affine map from the running statistics.
    Tensor<T> out = Tensor<T>::uninit(vx.shape());
    const T* xd = vx.data();
    const T* gd = gamma_.value.data();
    const T* bd = beta_.value.data();
    std::vector<T> scale(static_cast<std::size_t>(c)), shift(static_cast<std::size_t>(c));
    for (int ch = 0; ch < c; ++ch) {
      const T inv_std = T(1) / std::sqrt(running_var_[static_cast<std::size_t>(ch)] + eps_);
      scale[static_cast<std::size_t>(ch)] = gd[ch] * inv_std;
      shift[static_cast<std::size_t>(ch)] =
          bd[ch] - gd[ch] * running_mean_[static_cast<std::size_t>(ch)] * inv_std;
    }
    T* yd = out.data();
    for (std::size_t r = 0; r < rows; ++r)
      for (int ch = 0; ch < c; ++ch)
        yd[r * c + ch] = scale[static_cast<std::size_t>(ch)] * xd[r * c + ch] +
                         shift[static_cast<std::size_t>(ch)];
    const int cc = c;
    Tensor<T> rm = running_mean_, rv = running_var_;
    return tape.make(std::move(out), {x.id, g.id, b.id},
                     [x, g, b, rm = std::move(rm), rv = std::move(rv), rows, cc,
                      eps = eps_](Tape<T>& t, int self) {
                       const auto& gy = t.grad(self);
                       const auto& vx = t.value(x);
                       const auto& vg = t.value(g);
                       for (int ch = 0; ch < cc; ++ch) {
                         const T inv_std = T(1) / std::sqrt(rv[static_cast<std::size_t>(ch)] + eps);
                         T sg = T(0), sgx = T(0);
                         for (std::size_t r = 0; r < rows; ++r) {
                           const std::size_t i = r * cc + static_cast<std::size_t>(ch);
                           sg += gy[i];
                           sgx += gy[i] * (vx[i] - rm[static_cast<std::size_t>(ch)]) * inv_std;
                         }
                         if (t.requires_grad(b)) t.grad(b)[static_cast<std::size_t>(ch)] += sg;
                         if (t.requires_grad(g)) t.grad(g)[static_cast<std::size_t>(ch)] += sgx;
                         if (t.requires_grad(x)) {
                           auto& gx = t.grad(x);
                           const T k = vg[static_cast<std::size_t>(ch)] * inv_std;
                           for (std::size_t r = 0; r < rows; ++r)
                             gx[r * cc + static_cast<std::size_t>(ch)] +=
                                 k * gy[r * cc + static_cast<std::size_t>(ch)];
                         }
                       }
                     });
  }

  void collect(ParamVec<T>& ps) {
    ps.push_back(&gamma_);
    ps.push_back(&beta_);
  }

  void collect_state(StateVec<T>& st) {
    st.emplace_back(gamma_.name.substr(0, gamma_.name.size() - 6) + ".running_mean",
                    &running_mean_);
    st.emplace_back(gamma_.name.substr(0, gamma_.name.size() - 6) + ".running_var", &running_var_);
  }

  Tensor<T>& running_mean() { return running_mean_; }
  Tensor<T>& running_var() { return running_var_; }
  Parameter<T>& gamma() { return gamma_; }
  Parameter<T>& beta() { return beta_; }

 private:
  Parameter<T> gamma_, beta_;
  Tensor<T> running_mean_, running_var_;
  T momentum_, eps_;
};

// ---------------------------------------------------------------------------
// Dropout (inverted): train masks and rescales by 1/(1-rate); infer is the
// identity. Mask is deterministic per (seed, layer name, step).
// ---------------------------------------------------------------------------

template <typename T>
class DropoutLayer {
 public:
  DropoutLayer(std::string name, double rate) : name_(std::move(name)), rate_(rate) {
    if (rate < 0.0 || rate >= 1.0)
      throw std::invalid_argument("dropout rate must be in [0, 1), got " + std::to_string(rate));
  }

  Var forward(Tape<T>& tape, Var x, Mode mode, const RunCtx& ctx) {
    if (mode == Mode::kInfer || rate_ == 0.0) return x;
    const auto& vx = tape.value(x);
    Rng rng(mix_seed(mix_seed(ctx.seed, hash_str(name_)), static_cast<std::uint64_t>(ctx.step)));
    const T inv_keep = T(1) / static_cast<T>(1.0 - rate_);
    Tensor<T> mask = Tensor<T>::uninit(vx.shape());
    for (std::size_t i = 0; i < mask.size(); ++i)
      mask[i] = rng.next_double() >= rate_ ? inv_keep : T(0);
    Tensor<T> out = Tensor<T>::uninit(vx.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = vx[i] * mask[i];
    return tape.make(std::move(out), {x.id}, [x, mask = std::move(mask)](Tape<T>& t, int self) {
      const auto& gy = t.grad(self);
      auto& gx = t.grad(x);
      for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * mask[i];
    });
  }

  double rate() const { return rate_; }

 private:
  std::string name_;
  double rate_;
};

// ---------------------------------------------------------------------------
// DenseLayer: affine map over the last axis.
// ---------------------------------------------------------------------------

template <typename T>
class DenseLayer {
 public:
  DenseLayer(const std::string& name, int din, int dout, Rng& rng)
      : w_(name + ".w", Tensor<T>::he_normal({din, dout}, din, rng)),
        b_(name + ".b", Tensor<T>::zeros({dout})) {}

  Var forward(Tape<T>& tape, Var x) {
    Var w = tape.leaf(w_);
    Var b = tape.leaf(b_);
    return add(tape, linear(tape, x, w), b);
  }

  Shape out_shape(Shape in) const {
    in.back() = w_.value.dim(1);
    return in;
  }

  std::int64_t flops(const Shape& in) const {
    return static_cast<std::int64_t>(shape_numel(in)) * w_.value.dim(1);
  }

  void collect(ParamVec<T>& ps) {
    ps.push_back(&w_);
    ps.push_back(&b_);
  }

  Parameter<T>& weight() { return w_; }
  Parameter<T>& bias() { return b_; }

 private:
  Parameter<T> w_;  // [Din, Dout]
  Parameter<T> b_;  // [Dout]
};

// ---------------------------------------------------------------------------
// Scaled dot-product attention: softmax(Q K^T / sqrt(d_k)) V.
// Q: [.., Sq, d_k], K: [.., Sk, d_k], V: [.., Sk, d_v].
// ---------------------------------------------------------------------------

template <typename T>
Var attention(Tape<T>& tape, Var q, Var k, Var v, int d_k) {
  const auto& vk = tape.value(k);
  const auto& vv = tape.value(v);
  const int rk = vk.rank(), rv = vv.rank();
  if (vk.dim(rk - 2) != vv.dim(rv - 2))
    throw std::invalid_argument("attention: K and V token counts differ");
  if (tape.value(q).shape().back() != vk.shape().back())
    throw std::invalid_argument("attention: Q and K feature dims differ");
  Var scores = matmul(tape, q, transpose_last2(tape, k));
  scores = scale(tape, scores, static_cast<T>(1.0 / std::sqrt(static_cast<double>(d_k))));
  return matmul(tape, softmax(tape, scores), v);
}

// Multi-head attention (projections per head, concatenated, projected by Wo)
// wrapped in the encoder used on the stream ends: residual + batch norm, then
// a 2x-expansion MLP with residual + batch norm. No positional embeddings.
template <typename T>
class AttentionBlock {
 public:
  AttentionBlock(const std::string& name, int d_model, int heads, Rng& rng, T act_slope = T(0.2))
      : heads_(heads),
        d_model_(d_model),
        d_k_(d_model / heads),
        wq_(name + ".wq", Tensor<T>::he_normal({d_model, d_model}, d_model, rng)),
        wk_(name + ".wk", Tensor<T>::he_normal({d_model, d_model}, d_model, rng)),
        wv_(name + ".wv", Tensor<T>::he_normal({d_model, d_model}, d_model, rng)),
        wo_(name + ".wo", Tensor<T>::he_normal({d_model, d_model}, d_model, rng)),
        bn1_(name + ".bn1", d_model),
        bn2_(name + ".bn2", d_model),
        mlp1_(name + ".mlp1", d_model, 2 * d_model, rng),
        mlp2_(name + ".mlp2", 2 * d_model, d_model, rng),
        act_slope_(act_slope) {
    if (d_model % heads != 0)
      throw std::invalid_argument("attention: d_model " + std::to_string(d_model) +
                                  " not divisible by heads " + std::to_string(heads));
  }

  // tokens: [N, S, d_model] -> same shape.
  Var forward(Tape<T>& tape, Var tokens, Mode mode) {
    Var q = linear(tape, tokens, tape.leaf(wq_));
    Var k = linear(tape, tokens, tape.leaf(wk_));
    Var v = linear(tape, tokens, tape.leaf(wv_));
    std::vector<Var> heads;
    for (int h = 0; h < heads_; ++h) {
      const int lo = h * d_k_, hi = (h + 1) * d_k_;
      Var qh = slice(tape, q, 2, lo, hi);
      Var kh = slice(tape, k, 2, lo, hi);
      Var vh = slice(tape, v, 2, lo, hi);
      heads.push_back(attention(tape, qh, kh, vh, d_k_));
    }
    Var cat = heads.size() == 1 ? heads[0] : concat(tape, 2, heads);
    Var mha = linear(tape, cat, tape.leaf(wo_));
    Var x1 = bn1_.forward(tape, add(tape, tokens, mha), mode);
    Var m = mlp1_.forward(tape, x1);
    m = leaky_relu(tape, m, act_slope_);
    m = mlp2_.forward(tape, m);
    return bn2_.forward(tape, add(tape, x1, m), mode);
  }

  std::int64_t flops(const Shape& in) const {
    const std::int64_t tokens = static_cast<std::int64_t>(in[0]) * in[1];
    const std::int64_t d = d_model_;
    // Four projections, the score/value contractions and the MLP.
    return tokens * d * d * 4 + 2 * tokens * in[1] * d + tokens * d * 4 * d;
  }

  void collect(ParamVec<T>& ps) {
    ps.push_back(&wq_);
    ps.push_back(&wk_);
    ps.push_back(&wv_);
    ps.push_back(&wo_);
    bn1_.collect(ps);
    bn2_.collect(ps);
    mlp1_.collect(ps);
    mlp2_.collect(ps);
  }

  void collect_state(StateVec<T>& st) {
    bn1_.collect_state(st);
    bn2_.collect_state(st);
  }

  int heads() const { return heads_; }
  int d_k() const { return d_k_; }

 private:
  int heads_, d_model_, d_k_;
  Parameter<T> wq_, wk_, wv_, wo_;
  BatchNormLayer<T> bn1_, bn2_;
  DenseLayer<T> mlp1_, mlp2_;
  T act_slope_;
};

// ---------------------------------------------------------------------------
// BiLSTM: forward and backward LSTM passes over [N, T', D]; per-step outputs
// are the concatenation of both directions' hidden states (2H per step).
// ---------------------------------------------------------------------------

template <typename T>
struct LstmCell {
  Parameter<T> wx;  // [D, 4H], gate order i, f, g, o
  Parameter<T> wh;  // [H, 4H]
  Parameter<T> b;   // [4H]

  LstmCell(const std::string& name, int input, int hidden, Rng& rng)
      : wx(name + ".wx",
           Tensor<T>::uniform({input, 4 * hidden}, -inv_sqrt(hidden), inv_sqrt(hidden), rng)),
        wh(name + ".wh",
           Tensor<T>::uniform({hidden, 4 * hidden}, -inv_sqrt(hidden), inv_sqrt(hidden), rng)),
        b(name + ".b", Tensor<T>::zeros({4 * hidden})) {}

  static T inv_sqrt(int h) { return static_cast<T>(1.0 / std::sqrt(static_cast<double>(h))); }
};

template <typename T>
class BiLSTMLayer {
 public:
  struct Out {
    Var seq;          // [N, T', 2H]
    Var final_state;  // [N, 2H]: forward state at T' ++ backward state at t=1
  };

  BiLSTMLayer(const std::string& name, int input, int hidden, Rng& rng)
      : fwd_(name + ".fwd", input, hidden, rng),
        bwd_(name + ".bwd", input, hidden, rng),
        hidden_(hidden) {}

  Out forward(Tape<T>& tape, Var x) {
    const Shape s = tape.shape(x);
    if (s.size() != 3) throw std::invalid_argument("bilstm input must be [N, T', D]");
    const int n = s[0], tt = s[1];
    auto run = [&](LstmCell<T>& cell, bool reverse) {
      Var wx = tape.leaf(cell.wx);
      Var wh = tape.leaf(cell.wh);
      Var b = tape.leaf(cell.b);
      Var h = tape.constant(Tensor<T>::zeros({n, hidden_}));
      Var c = tape.constant(Tensor<T>::zeros({n, hidden_}));
      std::vector<Var> states(static_cast<std::size_t>(tt));
      for (int step = 0; step < tt; ++step) {
        const int ti = reverse ? tt - 1 - step : step;
        Var xt = reshape(tape, slice(tape, x, 1, ti, ti + 1), {n, s[2]});
        Var gates = add(tape, add(tape, matmul(tape, xt, wx), matmul(tape, h, wh)), b);
        Var i = sigmoid(tape, slice(tape, gates, 1, 0, hidden_));
        Var f = sigmoid(tape, slice(tape, gates, 1, hidden_, 2 * hidden_));
        Var g = tanh_op(tape, slice(tape, gates, 1, 2 * hidden_, 3 * hidden_));
        Var o = sigmoid(tape, slice(tape, gates, 1, 3 * hidden_, 4 * hidden_));
        c = add(tape, mul(tape, f, c), mul(tape, i, g));
        h = mul(tape, o, tanh_op(tape, c));
        states[static_cast<std::size_t>(ti)] = h;
      }
      return std::make_pair(states, h);
    };
    auto [fstates, flast] = run(fwd_, false);
    auto [bstates, blast] = run(bwd_, true);
    std::vector<Var> steps;
    steps.reserve(static_cast<std::size_t>(tt));
    for (int ti = 0; ti < tt; ++ti) {
      Var both = concat(tape, 1, fstates[static_cast<std::size_t>(ti)],
                        bstates[static_cast<std::size_t>(ti)]);
      steps.push_back(reshape(tape, both, {n, 1, 2 * hidden_}));
    }
    Out out;
    out.seq = steps.size() == 1 ? steps[0] : concat(tape, 1, steps);
    out.final_state = concat(tape, 1, flast, blast);
    return out;
  }

  std::int64_t flops(const Shape& in) const {
    const std::int64_t steps = static_cast<std::int64_t>(in[0]) * in[1];
    return 2 * steps * (static_cast<std::int64_t>(in[2]) + hidden_) * 4 * hidden_;
  }

  void collect(ParamVec<T>& ps) {
    for (auto* cell : {&fwd_, &bwd_}) {
      ps.push_back(&cell->wx);
      ps.push_back(&cell->wh);
      ps.push_back(&cell->b);
    }
  }

  int hidden() const { return hidden_; }

 private:
  LstmCell<T> fwd_, bwd_;
  int hidden_;
};

// ---------------------------------------------------------------------------
// Class-weighted categorical cross-entropy over probabilities:
//   loss = -(1/N) * sum_n w[y_n] * log(max(p_n[y_n], 1e-12))
// ---------------------------------------------------------------------------

template <typename T>
Var weighted_cross_entropy(Tape<T>& tape, Var probs, const std::vector<int>& labels,
                           const std::vector<T>& class_weights) {
  const auto& vp = tape.value(probs);
  if (vp.rank() != 2) throw std::invalid_argument("cross entropy expects probs [N, C]");
  const int n = vp.dim(0), c = vp.dim(1);
  if (static_cast<int>(labels.size()) != n)
    throw std::invalid_argument("cross entropy: labels length != N");
  if (static_cast<int>(class_weights.size()) != c)
    throw std::invalid_argument("cross entropy: weight vector length " +
                                std::to_string(class_weights.size()) + " != class count " +
                                std::to_string(c));
  for (T w : class_weights)
    if (!(w > T(0))) throw std::invalid_argument("cross entropy: weights must be positive");
  constexpr double kClamp = 1e-12;
  T loss = T(0);
  for (int i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= c) throw std::invalid_argument("cross entropy: label out of range");
    const double p = std::max(static_cast<double>(vp[static_cast<std::size_t>(i * c + y)]), kClamp);
    loss -= class_weights[static_cast<std::size_t>(y)] * static_cast<T>(std::log(p));
  }
  loss /= static_cast<T>(n);
  return tape.make(Tensor<T>::scalar(loss), {probs.id},
                   [probs, labels, class_weights, n, c](Tape<T>& t, int self) {
                     const T g = t.grad(self)[0];
                     const auto& vp = t.value(probs);
                     auto& gp = t.grad(probs);
                     for (int i = 0; i < n; ++i) {
                       const int y = labels[static_cast<std::size_t>(i)];
                       const std::size_t idx = static_cast<std::size_t>(i * c + y);
                       const double p = static_cast<double>(vp[idx]);
                       if (p > kClamp)
                         gp[idx] -= g * class_weights[static_cast<std::size_t>(y)] /
                                    (static_cast<T>(p) * static_cast<T>(n));
                     }
                   });
}

}  // namespace stshare
