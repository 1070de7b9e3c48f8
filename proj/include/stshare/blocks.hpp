#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "stshare/layers.hpp"

namespace stshare {

enum class Act { kLeakyRelu, kRelu };

template <typename T>
Var activate(Tape<T>& tape, Var x, Act act, T slope) {
  return act == Act::kRelu ? relu(tape, x) : leaky_relu(tape, x, slope);
}

// n / k / m rows of the model summary: base filters, intra-block multiplier,
// kernel size, plus the stride schedule and dropout flag.
struct BlockSpec {
  int n = 16;
  double k = 1.5;
  int m = 3;
  Stride3 stride{1, 1, 1};
  bool dropout = false;
};

inline void validate_block_spec(const BlockSpec& s) {
  if (s.n < 1) throw std::invalid_argument("block spec: n must be >= 1");
  if (s.m < 1 || s.m % 2 == 0) throw std::invalid_argument("block spec: m must be odd and >= 1");
  if (s.k != 1.0 && s.k != 1.5) throw std::invalid_argument("block spec: k must be 1.0 or 1.5");
}

inline int chan(int n, double k) {
  return std::max(1, static_cast<int>(std::llround(n * k)));
}

// Branch allocation of an Inception-style block: 50% / 25% / 25% of the
// output channels, with minimums so tiny verification widths stay legal.
struct BranchChannels {
  int a, b, c;
};

inline BranchChannels split_branches(int total) {
  if (total < 3) throw std::invalid_argument("inception block needs >= 3 output channels");
  BranchChannels bc;
  bc.a = std::max(1, total / 2);
  bc.b = std::max(1, total / 4);
  bc.c = total - bc.a - bc.b;
  if (bc.c < 1) {
    bc.a -= 1 - bc.c;
    bc.c = 1;
  }
  return bc;
}

// Common interface of every trunk stage, so a single wiring routine can run
// either real tensors or symbolic shapes through the same topology.
template <typename T>
class Block {
 public:
  explicit Block(std::string name) : name_(std::move(name)) {}
  virtual ~Block() = default;
  virtual Var forward(Tape<T>& tape, Var x, Mode mode, const RunCtx& ctx) = 0;
  virtual Shape out_shape(const Shape& in) const = 0;
  virtual void collect(ParamVec<T>& ps) = 0;
  virtual void collect_state(StateVec<T>&) {}
  virtual std::int64_t flops(const Shape& in) const = 0;
  const std::string& name() const { return name_; }

 private:
  std::string name_;
};

// ---------------------------------------------------------------------------
// Primary module I: two conv stages, each conv -> (dropout) -> batch norm ->
// activation, channels Cin -> n -> n*k. The first stage may stride.
// ---------------------------------------------------------------------------

template <typename T>
class PrimaryBlockI : public Block<T> {
 public:
  PrimaryBlockI(const std::string& name, int cin, const BlockSpec& spec, int kernel_a,
                int kernel_b, Act act, double dropout_rate, T slope, Rng& rng)
      : Block<T>(name),
        conv_a_(name + ".conv_a", kernel_a, cin, spec.n, spec.stride, Padding::kSame, rng),
        conv_b_(name + ".conv_b", kernel_b, spec.n, chan(spec.n, spec.k), {1, 1, 1},
                Padding::kSame, rng),
        bn_a_(name + ".bn_a", spec.n),
        bn_b_(name + ".bn_b", chan(spec.n, spec.k)),
        drop_a_(name + ".drop_a", spec.dropout ? dropout_rate : 0.0),
        drop_b_(name + ".drop_b", spec.dropout ? dropout_rate : 0.0),
        act_(act),
        slope_(slope) {
    validate_block_spec(spec);
    if (kernel_b < 1) throw std::invalid_argument(name + ": undulated kernel m-2 below 1");
  }

  Var forward(Tape<T>& tape, Var x, Mode mode, const RunCtx& ctx) override {
    x = conv_a_.forward(tape, x);
    x = drop_a_.forward(tape, x, mode, ctx);
    x = bn_a_.forward(tape, x, mode);
    x = activate(tape, x, act_, slope_);
    x = conv_b_.forward(tape, x);
    x = drop_b_.forward(tape, x, mode, ctx);
    x = bn_b_.forward(tape, x, mode);
    return activate(tape, x, act_, slope_);
  }

  Shape out_shape(const Shape& in) const override {
    return conv_b_.out_shape(conv_a_.out_shape(in));
  }

  void collect(ParamVec<T>& ps) override {
    conv_a_.collect(ps);
    conv_b_.collect(ps);
    bn_a_.collect(ps);
    bn_b_.collect(ps);
  }

  void collect_state(StateVec<T>& st) override {
    bn_a_.collect_state(st);
    bn_b_.collect_state(st);
  }

  std::int64_t flops(const Shape& in) const override {
    return conv_a_.flops(in) + conv_b_.flops(conv_a_.out_shape(in));
  }

 private:
  Conv3DLayer<T> conv_a_, conv_b_;
  BatchNormLayer<T> bn_a_, bn_b_;
  DropoutLayer<T> drop_a_, drop_b_;
  Act act_;
  T slope_;
};

// ---------------------------------------------------------------------------
// Primary module II: Inception-style dimensionality-reduction block without
// the lone 1x1x1 branch. Branch A reduces then convolves m^3, branch B
// reduces then (m+2)^3, branch C pools then reduces; concatenated output is
// batch-normalized and activated. Output channels: 3 * n * k.
// ---------------------------------------------------------------------------

template <typename T>
class InceptionBlock : public Block<T> {
 public:
  InceptionBlock(const std::string& name, int cin, const BlockSpec& spec, Act act, T slope,
                 Rng& rng)
      : Block<T>(name), bc_(split_branches(3 * chan(spec.n, spec.k))), stride_(spec.stride) {
    validate_block_spec(spec);
    const int cout = 3 * chan(spec.n, spec.k);
    reduce_a_ = std::make_unique<Conv3DLayer<T>>(name + ".reduce_a", 1, cin, bc_.a,
                                                 Stride3{1, 1, 1}, Padding::kSame, rng);
    conv_a_ = std::make_unique<Conv3DLayer<T>>(name + ".conv_a", spec.m, bc_.a, bc_.a, spec.stride,
                                               Padding::kSame, rng);
    reduce_b_ = std::make_unique<Conv3DLayer<T>>(name + ".reduce_b", 1, cin, bc_.b,
                                                 Stride3{1, 1, 1}, Padding::kSame, rng);
    conv_b_ = std::make_unique<Conv3DLayer<T>>(name + ".conv_b", spec.m + 2, bc_.b, bc_.b,
                                               spec.stride, Padding::kSame, rng);
    proj_c_ = std::make_unique<Conv3DLayer<T>>(name + ".proj_c", 1, cin, bc_.c, Stride3{1, 1, 1},
                                               Padding::kSame, rng);
    bn_ = std::make_unique<BatchNormLayer<T>>(name + ".bn", cout);
    act_ = act;
    slope_ = slope;
  }

  Var forward(Tape<T>& tape, Var x, Mode mode, const RunCtx& /*ctx*/) override {
    Var a = activate(tape, reduce_a_->forward(tape, x), act_, slope_);
    a = conv_a_->forward(tape, a);
    Var b = activate(tape, reduce_b_->forward(tape, x), act_, slope_);
    b = conv_b_->forward(tape, b);
    Var c = pool3d(tape, x, Pool::kMax, {3, 3, 3}, stride_, Padding::kSame);
    c = proj_c_->forward(tape, c);
    Var cat = concat(tape, 4, std::vector<Var>{a, b, c});
    return activate(tape, bn_->forward(tape, cat, mode), act_, slope_);
  }

  Shape out_shape(const Shape& in) const override {
    Shape s = conv_a_->out_shape(reduce_a_->out_shape(in));
    s[4] = bc_.a + bc_.b + bc_.c;
    return s;
  }

  void collect(ParamVec<T>& ps) override {
    reduce_a_->collect(ps);
    conv_a_->collect(ps);
    reduce_b_->collect(ps);
    conv_b_->collect(ps);
    proj_c_->collect(ps);
    bn_->collect(ps);
  }

  void collect_state(StateVec<T>& st) override { bn_->collect_state(st); }

  std::int64_t flops(const Shape& in) const override {
    std::int64_t f = reduce_a_->flops(in) + conv_a_->flops(reduce_a_->out_shape(in));
    f += reduce_b_->flops(in) + conv_b_->flops(reduce_b_->out_shape(in));
    Shape pooled = in;
    pooled[1] = detail::out_dim_same(in[1], stride_.t);
    pooled[2] = detail::out_dim_same(in[2], stride_.h);
    pooled[3] = detail::out_dim_same(in[3], stride_.w);
    f += proj_c_->flops(pooled);
    return f;
  }

 private:
  BranchChannels bc_;
  Stride3 stride_;
  std::unique_ptr<Conv3DLayer<T>> reduce_a_, conv_a_, reduce_b_, conv_b_, proj_c_;
  std::unique_ptr<BatchNormLayer<T>> bn_;
  Act act_;
  T slope_;
};

// ---------------------------------------------------------------------------
// Joint processing module: grid-reduction block applied to combined stream
// features, always striding 2 on every axis. Branches: reduce -> 3^3 s2;
// reduce -> 3^3 -> 3^3 s2; maxpool s2 -> reduce.
// ---------------------------------------------------------------------------

template <typename T>
class InceptionDJoint : public Block<T> {
 public:
  InceptionDJoint(const std::string& name, int cin, int cout, Act act, T slope, Rng& rng)
      : Block<T>(name), bc_(split_branches(cout)) {
    reduce_a_ = std::make_unique<Conv3DLayer<T>>(name + ".reduce_a", 1, cin, bc_.a,
                                                 Stride3{1, 1, 1}, Padding::kSame, rng);
    conv_a_ = std::make_unique<Conv3DLayer<T>>(name + ".conv_a", 3, bc_.a, bc_.a, Stride3{2, 2, 2},
                                               Padding::kSame, rng);
    reduce_b_ = std::make_unique<Conv3DLayer<T>>(name + ".reduce_b", 1, cin, bc_.b,
                                                 Stride3{1, 1, 1}, Padding::kSame, rng);
    conv_b1_ = std::make_unique<Conv3DLayer<T>>(name + ".conv_b1", 3, bc_.b, bc_.b,
                                                Stride3{1, 1, 1}, Padding::kSame, rng);
    conv_b2_ = std::make_unique<Conv3DLayer<T>>(name + ".conv_b2", 3, bc_.b, bc_.b,
                                                Stride3{2, 2, 2}, Padding::kSame, rng);
    proj_c_ = std::make_unique<Conv3DLayer<T>>(name + ".proj_c", 1, cin, bc_.c, Stride3{1, 1, 1},
                                               Padding::kSame, rng);
    bn_ = std::make_unique<BatchNormLayer<T>>(name + ".bn", cout);
    act_ = act;
    slope_ = slope;
  }

  Var forward(Tape<T>& tape, Var x, Mode mode, const RunCtx& /*ctx*/) override {
    Var a = activate(tape, reduce_a_->forward(tape, x), act_, slope_);
    a = conv_a_->forward(tape, a);
    Var b = activate(tape, reduce_b_->forward(tape, x), act_, slope_);
    b = activate(tape, conv_b1_->forward(tape, b), act_, slope_);
    b = conv_b2_->forward(tape, b);
    Var c = pool3d(tape, x, Pool::kMax, {3, 3, 3}, {2, 2, 2}, Padding::kSame);
    c = proj_c_->forward(tape, c);
    Var cat = concat(tape, 4, std::vector<Var>{a, b, c});
    return activate(tape, bn_->forward(tape, cat, mode), act_, slope_);
  }

  Shape out_shape(const Shape& in) const override {
    Shape s = conv_a_->out_shape(reduce_a_->out_shape(in));
    s[4] = bc_.a + bc_.b + bc_.c;
    return s;
  }

  void collect(ParamVec<T>& ps) override {
    reduce_a_->collect(ps);
    conv_a_->collect(ps);
    reduce_b_->collect(ps);
    conv_b1_->collect(ps);
    conv_b2_->collect(ps);
    proj_c_->collect(ps);
    bn_->collect(ps);
  }

  void collect_state(StateVec<T>& st) override { bn_->collect_state(st); }

  std::int64_t flops(const Shape& in) const override {
    std::int64_t f = reduce_a_->flops(in) + conv_a_->flops(reduce_a_->out_shape(in));
    const Shape rb = reduce_b_->out_shape(in);
    f += reduce_b_->flops(in) + conv_b1_->flops(rb) + conv_b2_->flops(conv_b1_->out_shape(rb));
    Shape pooled = in;
    pooled[1] = detail::out_dim_same(in[1], 2);
    pooled[2] = detail::out_dim_same(in[2], 2);
    pooled[3] = detail::out_dim_same(in[3], 2);
    f += proj_c_->flops(pooled);
    return f;
  }

 private:
  BranchChannels bc_;
  std::unique_ptr<Conv3DLayer<T>> reduce_a_, conv_a_, reduce_b_, conv_b1_, conv_b2_, proj_c_;
  std::unique_ptr<BatchNormLayer<T>> bn_;
  Act act_;
  T slope_;
};

// ---------------------------------------------------------------------------
// Simple joint processing: channelwise dense (1x1x1 conv) plus dropout.
// At inference this is a pure affine map.
// ---------------------------------------------------------------------------

template <typename T>
class SimpleJoint : public Block<T> {
 public:
  SimpleJoint(const std::string& name, int cin, int cout, Stride3 stride, double dropout_rate,
              Rng& rng)
      : Block<T>(name),
        dense_(name + ".dense", 1, cin, cout, stride, Padding::kSame, rng),
        drop_(name + ".drop", dropout_rate) {}

  Var forward(Tape<T>& tape, Var x, Mode mode, const RunCtx& ctx) override {
    return drop_.forward(tape, dense_.forward(tape, x), mode, ctx);
  }

  Shape out_shape(const Shape& in) const override { return dense_.out_shape(in); }

  void collect(ParamVec<T>& ps) override { dense_.collect(ps); }

  std::int64_t flops(const Shape& in) const override { return dense_.flops(in); }

 private:
  Conv3DLayer<T> dense_;
  DropoutLayer<T> drop_;
};

// ---------------------------------------------------------------------------
// Self-attention over the end features of one stream: the [T,H,W] grid is
// flattened to T*H*W tokens of width C, run through the encoder, and
// restored.
// ---------------------------------------------------------------------------

template <typename T>
class AttentionStage : public Block<T> {
 public:
  AttentionStage(const std::string& name, int channels, int heads, T slope, Rng& rng)
      : Block<T>(name), enc_(name + ".enc", channels, heads, rng, slope) {}

  Var forward(Tape<T>& tape, Var x, Mode mode, const RunCtx& /*ctx*/) override {
    const Shape s = tape.shape(x);
    Var tokens = reshape(tape, x, {s[0], s[1] * s[2] * s[3], s[4]});
    Var out = enc_.forward(tape, tokens, mode);
    return reshape(tape, out, s);
  }

  Shape out_shape(const Shape& in) const override { return in; }

  void collect(ParamVec<T>& ps) override { enc_.collect(ps); }

  void collect_state(StateVec<T>& st) override { enc_.collect_state(st); }

  std::int64_t flops(const Shape& in) const override {
    return enc_.flops({in[0], in[1] * in[2] * in[3], in[4]});
  }

 private:
  AttentionBlock<T> enc_;
};

}  // namespace stshare
