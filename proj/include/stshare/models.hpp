#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "stshare/blocks.hpp"
#include "stshare/classes.hpp"

namespace stshare {

// The five dual-stream architectures, each buildable in feature-sharing form
// (streams combined and jointly processed at every inter-module junction,
// the joint result feeding both streams) or standalone form (junction
// processing replicated per stream, fusion only before the head).

enum class ModelKind { kBaseline, kCiv3dBilstm, kCiv3dMha, kSrs, kCrs };

inline const char* model_name(ModelKind k) {
  switch (k) {
    case ModelKind::kBaseline: return "baseline";
    case ModelKind::kCiv3dBilstm: return "civ3d_bilstm";
    case ModelKind::kCiv3dMha: return "civ3d_mha";
    case ModelKind::kSrs: return "srs";
    case ModelKind::kCrs: return "crs";
  }
  return "?";
}

inline ModelKind model_from(const std::string& s) {
  for (ModelKind k : {ModelKind::kBaseline, ModelKind::kCiv3dBilstm, ModelKind::kCiv3dMha,
                      ModelKind::kSrs, ModelKind::kCrs})
    if (s == model_name(k)) return k;
  throw std::invalid_argument("unknown model name: " + s);
}

struct ModelConfig {
  ModelKind kind = ModelKind::kBaseline;
  bool sharing = true;
  int t = 8, h = 96, w = 128;
  int img_channels = 3;  // 3 for rgb/nightified, 1 for grayscale
  double width_scale = 1.0;
  int heads = 4;
  int bilstm_hidden = 256;
  double dropout_rate = 0.2;
  double leaky_slope = 0.2;
  std::vector<int> fc_units = {512, 64};
  std::uint64_t init_seed = 1234;

  std::string variant_name() const {
    return std::string(model_name(kind)) + (sharing ? "/sharing" : "/standalone");
  }
};

inline void validate_model_config(const ModelConfig& c) {
  if (c.t < 1 || c.h < 8 || c.w < 8) throw std::invalid_argument("bad input contract dims");
  if (c.img_channels != 1 && c.img_channels != 3)
    throw std::invalid_argument("image stream channels must be 1 or 3");
  if ((c.kind == ModelKind::kSrs) && c.t != 4 && c.t != 8 && c.t != 16)
    throw std::invalid_argument("srs temporal crop is defined for T in {4, 8, 16}");
  if (c.width_scale <= 0.0 || c.width_scale > 1.0)
    throw std::invalid_argument("width_scale must be in (0, 1]");
  if (c.fc_units.empty()) throw std::invalid_argument("fc_units must be non-empty");
}

// Per-module base filters, intra-block multiplier and kernel size of each
// architecture's stream blocks (the image-lane schedule; the attention
// variants mirror kernels inversely on the flow lane).
struct ModuleRow {
  int n;
  double k;
  int m;
};

inline std::vector<ModuleRow> module_table(ModelKind kind) {
  switch (kind) {
    case ModelKind::kBaseline:
      return {{16, 1.5, 5}, {32, 1.5, 3}, {64, 1.5, 5}, {128, 1.5, 5}};
    case ModelKind::kCiv3dBilstm:
    case ModelKind::kCiv3dMha:
      return {{16, 1.5, 7}, {32, 1.5, 5}, {64, 1.5, 5}, {128, 1.5, 3}};
    case ModelKind::kSrs:
      return {{8, 1.5, 3}, {16, 1.5, 3}, {32, 1.5, 3}, {64, 1.5, 3}, {64, 1.5, 3}, {128, 1.0, 3}};
    case ModelKind::kCrs:
      return {{12, 1.0, 3}, {24, 1.0, 3}, {48, 1.0, 3}, {96, 1.0, 3}, {192, 1.0, 3}};
  }
  return {};
}

struct ParamCountReport {
  std::int64_t total = 0;
  std::int64_t flops = 0;  // forward multiply-accumulates of conv/dense/matmul
  std::vector<std::pair<std::string, std::int64_t>> per_block;
};

struct ForwardResult {
  Var logits;  // [N, 8]
  Var probs;   // softmax of logits
};

namespace modeldetail {

inline int scaled(int n, double scale) {
  return std::max(1, static_cast<int>(std::llround(n * scale)));
}

}  // namespace modeldetail

template <typename T>
class Network {
 public:
  static Network assemble(const ModelConfig& config) { return Network(config); }

  const ModelConfig& config() const { return config_; }

  // Junction output shapes [T,H,W,C] at the configured input contract,
  // directly comparable to the published model summary for sharing builds.
  std::vector<Shape> shape_trace() {
    ShapeEval ev;
    auto out = wire(ev, input_shape(1, config_.img_channels), input_shape(1, 2));
    std::vector<Shape> trace;
    for (Shape& s : out.junctions) trace.push_back(Shape{s[1], s[2], s[3], s[4]});
    return trace;
  }

  ForwardResult forward(Tape<T>& tape, Var rgb, Var flow, Mode mode, const RunCtx& ctx) {
    check_input(tape.shape(rgb), config_.img_channels, "image stream");
    check_input(tape.shape(flow), 2, "flow stream");
    if (tape.shape(rgb)[0] != tape.shape(flow)[0])
      throw std::invalid_argument("stream batch sizes differ");
    TapeEval ev{tape, mode, ctx};
    auto out = wire(ev, rgb, flow);
    Var features = out.features;
    Var flat;
    if (bilstm_) {
      const Shape s = tape.shape(features);
      Var tokens = reshape(tape, features, {s[0], s[1] * s[2] * s[3], s[4]});
      flat = bilstm_->forward(tape, tokens).final_state;
    } else {
      const Shape s = tape.shape(features);
      flat = reshape(tape, features,
                     {s[0], s[1] * s[2] * s[3] * s[4]});
    }
    Var x = flat;
    for (std::size_t i = 0; i < fc_.size(); ++i) {
      x = fc_[i]->forward(tape, x);
      if (i + 1 < fc_.size()) x = activate(tape, x, act_, static_cast<T>(config_.leaky_slope));
    }
    ForwardResult r;
    r.logits = x;
    r.probs = softmax(tape, x);
    return r;
  }

  std::vector<Parameter<T>*> params() {
    ParamVec<T> ps;
    for (auto& b : blocks_) b->collect(ps);
    if (bilstm_) bilstm_->collect(ps);
    for (auto& d : fc_) d->collect(ps);
    return ps;
  }

  // Mutable non-trainable state (batch-norm running statistics).
  StateVec<T> state() {
    StateVec<T> st;
    for (auto& b : blocks_) b->collect_state(st);
    return st;
  }

  ParamCountReport param_count() {
    ParamCountReport report;
    for (auto& b : blocks_) {
      ParamVec<T> ps;
      b->collect(ps);
      std::int64_t n = 0;
      for (auto* p : ps) n += static_cast<std::int64_t>(p->value.size());
      report.per_block.emplace_back(b->name(), n);
      report.total += n;
    }
    auto add_named = [&](const std::string& name, auto& layer) {
      ParamVec<T> ps;
      layer.collect(ps);
      std::int64_t n = 0;
      for (auto* p : ps) n += static_cast<std::int64_t>(p->value.size());
      report.per_block.emplace_back(name, n);
      report.total += n;
    };
    if (bilstm_) add_named(prefix_ + ".bilstm", *bilstm_);
    for (std::size_t i = 0; i < fc_.size(); ++i)
      add_named(prefix_ + ".fc" + std::to_string(i + 1), *fc_[i]);

    // FLOPs along the wiring, plus the head.
    ShapeEval ev;
    ev.log = true;
    auto out = wire(ev, input_shape(1, config_.img_channels), input_shape(1, 2));
    for (auto& [block, in_shape] : ev.applied) report.flops += block->flops(in_shape);
    Shape s = out.features;
    if (bilstm_) {
      report.flops += bilstm_->flops({s[0], s[1] * s[2] * s[3], s[4]});
      s = {s[0], 2 * bilstm_->hidden()};
    } else {
      s = {s[0], s[1] * s[2] * s[3] * s[4]};
    }
    for (auto& d : fc_) {
      report.flops += d->flops(s);
      s = d->out_shape(s);
    }
    return report;
  }

 private:
  explicit Network(const ModelConfig& config) : config_(config) {
    validate_model_config(config);
    prefix_ = model_name(config.kind);
    act_ = (config.kind == ModelKind::kSrs || config.kind == ModelKind::kCrs) ? Act::kRelu
                                                                              : Act::kLeakyRelu;
    Rng rng(config.init_seed);
    switch (config.kind) {
      case ModelKind::kBaseline:
      case ModelKind::kCiv3dBilstm:
      case ModelKind::kCiv3dMha:
        build_conv_family(rng);
        break;
      case ModelKind::kSrs:
        build_srs(rng);
        break;
      case ModelKind::kCrs:
        build_crs(rng);
        break;
    }
    build_head(rng);
  }

  Shape input_shape(int n, int c) const { return {n, config_.t, config_.h, config_.w, c}; }

  static void check_input(const Shape& s, int c, const char* what) {
    if (s.size() != 5 || s[4] != c)
      throw std::invalid_argument(std::string(what) + " must be [N,T,H,W," + std::to_string(c) +
                                  "], got " + shape_str(s));
  }

  // --- evaluators ---------------------------------------------------------

  struct TapeEval {
    using V = Var;
    Tape<T>& tape;
    Mode mode;
    const RunCtx& ctx;
    V apply(Block<T>& b, V x) { return b.forward(tape, x, mode, ctx); }
    V add2(V a, V b) { return add(tape, a, b); }
    V concat_ch(V a, V b) { return concat(tape, 4, a, b); }
    V crop(V x, int axis, int lo, int hi) { return slice(tape, x, axis, lo, hi); }
    V pool_to(V x, int t, int h, int w) { return adaptive_avg_pool3d(tape, x, t, h, w); }
    V halve_spatial(V x) {
      return pool3d(tape, x, Pool::kAvg, {1, 2, 2}, {1, 2, 2}, Padding::kSame);
    }
    Shape shape_of(V x) { return tape.shape(x); }
  };

  struct ShapeEval {
    using V = Shape;
    bool log = false;
    std::vector<std::pair<Block<T>*, Shape>> applied;
    V apply(Block<T>& b, V x) {
      if (log) applied.emplace_back(&b, x);
      return b.out_shape(x);
    }
    V add2(V a, V b) {
      if (!(a == b))
        throw std::logic_error("junction addition shape mismatch: " + shape_str(a) + " vs " +
                               shape_str(b));
      return a;
    }
    V concat_ch(V a, V b) {
      for (int i = 0; i < 4; ++i)
        if (a[static_cast<std::size_t>(i)] != b[static_cast<std::size_t>(i)])
          throw std::logic_error("junction concat shape mismatch: " + shape_str(a) + " vs " +
                                 shape_str(b));
      a[4] += b[4];
      return a;
    }
    V crop(V x, int axis, int lo, int hi) {
      x[static_cast<std::size_t>(axis)] = hi - lo;
      return x;
    }
    V pool_to(V x, int t, int h, int w) {
      x[1] = t;
      x[2] = h;
      x[3] = w;
      return x;
    }
    V halve_spatial(V x) {
      x[2] = (x[2] + 1) / 2;
      x[3] = (x[3] + 1) / 2;
      return x;
    }
    Shape shape_of(const V& x) { return x; }
  };

  template <typename E>
  struct WireOut {
    typename E::V features;
    std::vector<typename E::V> junctions;
  };

  template <typename E>
  WireOut<E> wire(E& ev, typename E::V rgb, typename E::V flow) {
    switch (config_.kind) {
      case ModelKind::kBaseline:
      case ModelKind::kCiv3dBilstm:
      case ModelKind::kCiv3dMha:
        return wire_conv_family(ev, rgb, flow);
      case ModelKind::kSrs:
        return wire_srs(ev, rgb, flow);
      case ModelKind::kCrs:
        return wire_crs(ev, rgb, flow);
    }
    throw std::logic_error("unreachable");
  }

  // --- baseline / CIv3D family --------------------------------------------

  void build_conv_family(Rng& rng) {
    const bool civ3d = config_.kind != ModelKind::kBaseline;
    const bool dropout = config_.kind != ModelKind::kCiv3dBilstm;
    const auto table = module_table(config_.kind);
    const T slope = static_cast<T>(config_.leaky_slope);

    int cin_rgb = config_.img_channels, cin_flow = 2;
    for (int i = 0; i < 4; ++i) {
      BlockSpec spec;
      spec.n = modeldetail::scaled(table[static_cast<std::size_t>(i)].n, config_.width_scale);
      spec.k = table[static_cast<std::size_t>(i)].k;
      spec.m = table[static_cast<std::size_t>(i)].m;
      spec.stride = i == 0 ? Stride3{1, 2, 2} : Stride3{1, 1, 1};
      spec.dropout = dropout;
      const int ch = chan(spec.n, spec.k);
      const int m_flow = table[table.size() - 1 - static_cast<std::size_t>(i)].m;
      const int ka_rgb = spec.m;
      const int kb_rgb = civ3d ? spec.m - 2 : spec.m;
      const int ka_flow = civ3d ? m_flow : spec.m;
      const int kb_flow = civ3d ? m_flow - 2 : spec.m;
      const std::string mi = ".module" + std::to_string(i + 1);
      rgb_blocks_.push_back(std::make_unique<PrimaryBlockI<T>>(
          prefix_ + ".rgb" + mi, cin_rgb, spec, ka_rgb, kb_rgb, act_, config_.dropout_rate, slope,
          rng));
      flow_blocks_.push_back(std::make_unique<PrimaryBlockI<T>>(
          prefix_ + ".flow" + mi, cin_flow, spec, ka_flow, kb_flow, act_, config_.dropout_rate,
          slope, rng));
      auto make_joint = [&](const std::string& lane) -> std::unique_ptr<Block<T>> {
        const std::string jn = prefix_ + lane + ".joint" + std::to_string(i + 1);
        if (civ3d)
          return std::make_unique<InceptionDJoint<T>>(jn, ch, ch, act_, slope, rng);
        return std::make_unique<SimpleJoint<T>>(jn, ch, ch, Stride3{2, 2, 2},
                                                config_.dropout_rate, rng);
      };
      if (config_.sharing) {
        joints_.push_back(make_joint(""));
      } else {
        joints_.push_back(make_joint(".rgb"));
        joints_flow_.push_back(make_joint(".flow"));
      }
      cin_rgb = cin_flow = ch;
    }
    if (config_.kind == ModelKind::kCiv3dMha) {
      const int ch = chan(modeldetail::scaled(table[3].n, config_.width_scale), 1.5);
      int heads = config_.heads;
      while (ch % heads != 0) --heads;  // narrow verification widths
      attn_rgb_ = std::make_unique<AttentionStage<T>>(prefix_ + ".rgb.attn", ch, heads, slope, rng);
      attn_flow_ =
          std::make_unique<AttentionStage<T>>(prefix_ + ".flow.attn", ch, heads, slope, rng);
    }
    register_blocks();
  }

  template <typename E>
  WireOut<E> wire_conv_family(E& ev, typename E::V rgb, typename E::V flow) {
    WireOut<E> out;
    for (std::size_t i = 0; i < rgb_blocks_.size(); ++i) {
      rgb = ev.apply(*rgb_blocks_[i], rgb);
      flow = ev.apply(*flow_blocks_[i], flow);
      const bool last = i + 1 == rgb_blocks_.size();
      if (last && attn_rgb_) {
        rgb = ev.apply(*attn_rgb_, rgb);
        flow = ev.apply(*attn_flow_, flow);
      }
      if (config_.sharing) {
        auto joint = ev.apply(*joints_[i], ev.add2(rgb, flow));
        out.junctions.push_back(joint);
        rgb = flow = joint;
      } else {
        rgb = ev.apply(*joints_[i], rgb);
        flow = ev.apply(*joints_flow_[i], flow);
        out.junctions.push_back(rgb);
      }
    }
    out.features = config_.sharing ? rgb : ev.add2(rgb, flow);
    return out;
  }

  // --- SRS ------------------------------------------------------------------

  void build_srs(Rng& rng) {
    const auto table = module_table(config_.kind);
    const T slope = static_cast<T>(config_.leaky_slope);
    int prev_lane = 0;
    for (int i = 0; i < 5; ++i) {
      BlockSpec spec;
      spec.n = modeldetail::scaled(table[static_cast<std::size_t>(i)].n, config_.width_scale);
      spec.k = table[static_cast<std::size_t>(i)].k;
      spec.m = table[static_cast<std::size_t>(i)].m;
      spec.stride = i == 0 ? Stride3{1, 1, 1} : Stride3{2, 2, 2};
      const std::string mi = ".module" + std::to_string(i + 1);
      const int cin_rgb = i == 0 ? config_.img_channels
                                 : (config_.sharing ? 2 * prev_lane : prev_lane);
      // Sharing: later flow blocks re-ingest strided crops of the original
      // flow; standalone chains the lane's own features.
      const int cin_flow = i == 0 ? 2 : (config_.sharing ? 2 : prev_lane);
      const Stride3 flow_stride = (i == 0 || !config_.sharing) ? spec.stride : Stride3{1, 1, 1};
      BlockSpec flow_spec = spec;
      flow_spec.stride = flow_stride;
      rgb_blocks_.push_back(std::make_unique<InceptionBlock<T>>(prefix_ + ".rgb" + mi, cin_rgb,
                                                                spec, act_, slope, rng));
      flow_blocks_.push_back(std::make_unique<InceptionBlock<T>>(prefix_ + ".flow" + mi, cin_flow,
                                                                 flow_spec, act_, slope, rng));
      prev_lane = 3 * chan(spec.n, spec.k);
    }
    BlockSpec single;
    single.n = modeldetail::scaled(table[5].n, config_.width_scale);
    single.k = table[5].k;
    single.m = table[5].m;
    single.stride = Stride3{2, 2, 2};
    single_block_ = std::make_unique<InceptionBlock<T>>(prefix_ + ".single.module6", 2 * prev_lane,
                                                        single, act_, slope, rng);
    register_blocks();
  }

  // Temporal crop: T/4 frames off each end (halved/doubled with T); spatial
  // crop: 8 border pixels per side at the canonical 96x128, scaled with the
  // contract.
  struct SrsCrop {
    int t_lo, t_hi, h_lo, h_hi, w_lo, w_hi;
  };

  SrsCrop srs_crop(const Shape& flow_in) const {
    const int t = flow_in[1], h = flow_in[2], w = flow_in[3];
    const int tc = std::max(1, t / 4);
    int sc_h = static_cast<int>(std::lround(8.0 * h / 96.0));
    int sc_w = static_cast<int>(std::lround(8.0 * w / 128.0));
    while (h - 2 * sc_h < 1) --sc_h;
    while (w - 2 * sc_w < 1) --sc_w;
    sc_h = std::max(sc_h, 0);
    sc_w = std::max(sc_w, 0);
    SrsCrop c{tc, t - tc, sc_h, h - sc_h, sc_w, w - sc_w};
    if (c.t_lo >= c.t_hi) {
      c.t_lo = 0;
      c.t_hi = t;
    }
    return c;
  }

  template <typename E>
  WireOut<E> wire_srs(E& ev, typename E::V rgb, typename E::V flow) {
    WireOut<E> out;
    const Shape flow_in_shape = ev.shape_of(flow);
    auto cropped_of = [&](typename E::V src) {
      const SrsCrop c = srs_crop(flow_in_shape);
      auto v = ev.crop(src, 1, c.t_lo, c.t_hi);
      if (c.h_lo > 0) v = ev.crop(v, 2, c.h_lo, c.h_hi);
      if (c.w_lo > 0) v = ev.crop(v, 3, c.w_lo, c.w_hi);
      return v;
    };

    auto r = ev.apply(*rgb_blocks_[0], rgb);
    auto f = ev.apply(*flow_blocks_[0], flow);
    if (config_.sharing) {
      auto x = ev.concat_ch(r, f);
      out.junctions.push_back(x);
      auto flow_crop = cropped_of(flow);  // one-time crop of the raw flow
      for (std::size_t i = 1; i < rgb_blocks_.size(); ++i) {
        auto ri = ev.apply(*rgb_blocks_[i], x);
        const Shape rs = ev.shape_of(ri);
        auto fi = ev.apply(*flow_blocks_[i], ev.pool_to(flow_crop, rs[1], rs[2], rs[3]));
        x = ev.concat_ch(ri, fi);
        out.junctions.push_back(x);
      }
      auto single = ev.apply(*single_block_, x);
      out.junctions.push_back(single);
      out.features = single;
      return out;
    }
    // Standalone: both lanes chain independently; the flow lane keeps its
    // one-time crop of its own features after module 1.
    f = cropped_of(f);
    out.junctions.push_back(r);
    for (std::size_t i = 1; i < rgb_blocks_.size(); ++i) {
      r = ev.apply(*rgb_blocks_[i], r);
      f = ev.apply(*flow_blocks_[i], f);
      out.junctions.push_back(r);
    }
    const Shape rs = ev.shape_of(r);
    auto merged = ev.concat_ch(r, ev.pool_to(f, rs[1], rs[2], rs[3]));
    auto single = ev.apply(*single_block_, merged);
    out.junctions.push_back(single);
    out.features = single;
    return out;
  }

  // --- CRS ------------------------------------------------------------------

  void build_crs(Rng& rng) {
    const auto table = module_table(config_.kind);
    const T slope = static_cast<T>(config_.leaky_slope);
    int prev_lane = 0;
    for (int i = 0; i < 5; ++i) {
      BlockSpec spec;
      spec.n = modeldetail::scaled(table[static_cast<std::size_t>(i)].n, config_.width_scale);
      spec.k = table[static_cast<std::size_t>(i)].k;
      spec.m = table[static_cast<std::size_t>(i)].m;
      spec.stride = i == 0 ? Stride3{1, 1, 1} : Stride3{2, 2, 2};
      const std::string mi = ".module" + std::to_string(i + 1);
      const int cin_rgb = i == 0 ? config_.img_channels
                                 : (config_.sharing ? 2 * prev_lane : prev_lane);
      const int cin_flow = i == 0 ? 2 : (config_.sharing ? 2 * prev_lane : prev_lane);
      rgb_blocks_.push_back(
          std::make_unique<InceptionBlock<T>>(prefix_ + ".rgb" + mi, cin_rgb, spec, act_, slope, rng));
      flow_blocks_.push_back(std::make_unique<InceptionBlock<T>>(prefix_ + ".flow" + mi, cin_flow,
                                                                 spec, act_, slope, rng));
      prev_lane = 3 * chan(spec.n, spec.k);
    }
    register_blocks();
  }

  template <typename E>
  WireOut<E> wire_crs(E& ev, typename E::V rgb, typename E::V flow) {
    WireOut<E> out;
    auto r = ev.apply(*rgb_blocks_[0], rgb);
    auto f = ev.apply(*flow_blocks_[0], flow);
    if (config_.sharing) {
      // Every junction concat feeds both lanes, so each stream's previous
      // features reinforce the other's next block.
      auto x = ev.concat_ch(r, f);
      out.junctions.push_back(x);
      for (std::size_t i = 1; i < rgb_blocks_.size(); ++i) {
        auto ri = ev.apply(*rgb_blocks_[i], x);
        auto fi = ev.apply(*flow_blocks_[i], x);
        x = ev.concat_ch(ri, fi);
        out.junctions.push_back(x);
      }
      out.features = ev.halve_spatial(x);
      return out;
    }
    out.junctions.push_back(r);
    for (std::size_t i = 1; i < rgb_blocks_.size(); ++i) {
      r = ev.apply(*rgb_blocks_[i], r);
      f = ev.apply(*flow_blocks_[i], f);
      out.junctions.push_back(r);
    }
    out.features = ev.halve_spatial(ev.concat_ch(r, f));
    return out;
  }

  // --- head -----------------------------------------------------------------

  void build_head(Rng& rng) {
    ShapeEval ev;
    auto out = wire(ev, input_shape(1, config_.img_channels), input_shape(1, 2));
    const Shape s = out.features;
    int in;
    if (config_.kind == ModelKind::kCiv3dBilstm) {
      bilstm_ = std::make_unique<BiLSTMLayer<T>>(
          prefix_ + ".bilstm", s[4],
          std::max(1, static_cast<int>(std::llround(config_.bilstm_hidden * config_.width_scale))),
          rng);
      in = 2 * bilstm_->hidden();
    } else {
      in = s[1] * s[2] * s[3] * s[4];
    }
    std::vector<int> dims = config_.fc_units;
    for (std::size_t i = 0; i < dims.size(); ++i)
      dims[i] = std::max(kNumClasses,
                         static_cast<int>(std::llround(dims[i] * config_.width_scale)));
    dims.push_back(kNumClasses);
    int idx = 1;
    for (int dout : dims) {
      fc_.push_back(std::make_unique<DenseLayer<T>>(prefix_ + ".fc" + std::to_string(idx++), in,
                                                    dout, rng));
      in = dout;
    }
  }

  void register_blocks() {
    for (auto& b : rgb_blocks_) blocks_.push_back(b.get());
    for (auto& b : flow_blocks_) blocks_.push_back(b.get());
    if (attn_rgb_) blocks_.push_back(attn_rgb_.get());
    if (attn_flow_) blocks_.push_back(attn_flow_.get());
    for (auto& b : joints_) blocks_.push_back(b.get());
    for (auto& b : joints_flow_) blocks_.push_back(b.get());
    if (single_block_) blocks_.push_back(single_block_.get());
  }

  ModelConfig config_;
  std::string prefix_;
  Act act_ = Act::kLeakyRelu;
  std::vector<std::unique_ptr<Block<T>>> rgb_blocks_, flow_blocks_;
  std::vector<std::unique_ptr<Block<T>>> joints_, joints_flow_;
  std::unique_ptr<AttentionStage<T>> attn_rgb_, attn_flow_;
  std::unique_ptr<Block<T>> single_block_;
  std::unique_ptr<BiLSTMLayer<T>> bilstm_;
  std::vector<std::unique_ptr<DenseLayer<T>>> fc_;
  std::vector<Block<T>*> blocks_;  // wiring order, for reports
};

// The published junction shapes for the canonical 8 x 96 x 128 contract.
inline std::vector<Shape> reference_trace(ModelKind kind) {
  switch (kind) {
    case ModelKind::kBaseline:
    case ModelKind::kCiv3dBilstm:
    case ModelKind::kCiv3dMha:
      return {{4, 24, 32, 24}, {2, 12, 16, 48}, {1, 6, 8, 96}, {1, 3, 4, 192}};
    case ModelKind::kSrs:
      return {{8, 96, 128, 72}, {4, 48, 64, 144}, {2, 24, 32, 288},
              {1, 12, 16, 576}, {1, 6, 8, 576},  {1, 3, 4, 384}};
    case ModelKind::kCrs:
      return {{8, 96, 128, 72}, {4, 48, 64, 144}, {2, 24, 32, 288}, {1, 12, 16, 576},
              {1, 6, 8, 1152}};
  }
  return {};
}

// Published total trainable parameter counts (sharing / standalone).
inline std::int64_t reference_param_count(ModelKind kind, bool sharing) {
  switch (kind) {
    case ModelKind::kBaseline: return sharing ? 11315848 : 11348728;
    case ModelKind::kCiv3dBilstm: return sharing ? 13243712 : 16623752;
    case ModelKind::kCiv3dMha: return sharing ? 15554112 : 19044744;
    case ModelKind::kSrs: return sharing ? 9671872 : 9670024;
    case ModelKind::kCrs: return sharing ? 22927824 : 22483944;
  }
  return 0;
}

}  // namespace stshare
