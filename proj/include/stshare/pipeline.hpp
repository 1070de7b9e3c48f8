#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "stshare/classes.hpp"
#include "stshare/flow.hpp"
#include "stshare/image.hpp"
#include "stshare/rng.hpp"
#include "stshare/tensor.hpp"

namespace stshare {

enum class Lighting { kDay, kNight };
enum class Modality { kRgb, kNightified, kGrayscale, kFlow };

inline std::string modality_name(Modality m) {
  switch (m) {
    case Modality::kRgb: return "rgb";
    case Modality::kNightified: return "nightified";
    case Modality::kGrayscale: return "grayscale";
    case Modality::kFlow: return "flow";
  }
  return "?";
}

inline Modality modality_from(const std::string& s) {
  if (s == "rgb") return Modality::kRgb;
  if (s == "nightified") return Modality::kNightified;
  if (s == "grayscale") return Modality::kGrayscale;
  if (s == "flow") return Modality::kFlow;
  throw std::invalid_argument("unknown modality: " + s);
}

struct VideoClip {
  std::vector<Frame> frames;   // [H, W, 3] u8 each
  double fps = 30.0;
  std::vector<int> labels;     // per-frame class id, same length as frames
  Lighting lighting = Lighting::kDay;
  std::string source_id;       // originating video; splits never cut across it
  std::string split_tag;       // "main" or "clipped" for the paper protocol
};

// Per-channel means over designated night videos, in [0, 255].
struct ChannelStats {
  double mean_r = 0, mean_g = 0, mean_b = 0;
};

struct ClassWeights {
  std::array<double, kNumClasses> w{};
};

// One packed split: image cuboids [N,T,H,W,C], flow cuboids [N,T,H,W,2],
// labels, and bookkeeping.
struct CuboidDataset {
  Tensor<float> cuboids;               // [N, T, H, W, C]
  std::vector<int> labels;
  Modality modality = Modality::kRgb;
  std::string split;

  int count() const { return cuboids.rank() == 5 ? cuboids.dim(0) : 0; }
};

// ---------------------------------------------------------------------------
// Frame-level stages
// ---------------------------------------------------------------------------

// Resize to out_w x out_w, then crop (out_w - out_h)/2 rows top and bottom.
// The canonical geometry is 128x128 -> 96x128.
inline std::vector<Frame> standardize_frames(const VideoClip& clip, int out_h = 96,
                                             int out_w = 128) {
  if (clip.frames.empty()) throw std::invalid_argument("standardize_frames: empty clip");
  if (out_w < out_h || (out_w - out_h) % 2 != 0)
    throw std::invalid_argument("standardize_frames: need out_w >= out_h with even difference");
  const int margin = (out_w - out_h) / 2;
  std::vector<Frame> out;
  out.reserve(clip.frames.size());
  for (const Frame& f : clip.frames) {
    if (f.dim(0) < 8 || f.dim(1) < 8) throw std::invalid_argument("frame smaller than 8x8");
    const Frame square = (f.dim(0) == out_w && f.dim(1) == out_w)
                             ? f
                             : bilinear_resize(f, out_w, out_w);
    out.push_back(margin ? crop_rows(square, margin, margin) : square);
  }
  return out;
}

// Keeps indices 0, step, 2*step, ...; a kept frame keeps its own label.
template <typename Item>
std::pair<std::vector<Item>, std::vector<int>> temporal_downsample(const std::vector<Item>& items,
                                                                   const std::vector<int>& labels,
                                                                   int step = 5) {
  if (step < 1) throw std::invalid_argument("downsample step must be >= 1");
  std::pair<std::vector<Item>, std::vector<int>> out;
  for (std::size_t i = 0; i < items.size(); i += static_cast<std::size_t>(step)) {
    out.first.push_back(items[i]);
    out.second.push_back(i < labels.size() ? labels[i] : 0);
  }
  return out;
}

// Majority label of a window; ties break to the earliest frame's label.
inline int majority_label(const std::vector<int>& labels, std::size_t lo, std::size_t hi) {
  std::array<int, kNumClasses> counts{};
  for (std::size_t i = lo; i < hi; ++i) counts[static_cast<std::size_t>(labels[i])]++;
  int best = labels[lo], best_count = 0;
  for (std::size_t i = lo; i < hi; ++i) {
    const int c = counts[static_cast<std::size_t>(labels[i])];
    if (c > best_count) {
      best_count = c;
      best = labels[i];
    }
  }
  return best;
}

// Non-overlapping windows of T frames; the trailing remainder is discarded.
struct WindowPlan {
  std::vector<std::size_t> starts;
  std::vector<int> labels;
  std::size_t discarded = 0;
};

inline WindowPlan plan_windows(const std::vector<int>& frame_labels, int t) {
  if (t < 1) throw std::invalid_argument("temporal length must be >= 1");
  WindowPlan plan;
  const std::size_t n = frame_labels.size();
  const std::size_t windows = n / static_cast<std::size_t>(t);
  for (std::size_t wi = 0; wi < windows; ++wi) {
    const std::size_t lo = wi * static_cast<std::size_t>(t);
    plan.starts.push_back(lo);
    plan.labels.push_back(majority_label(frame_labels, lo, lo + static_cast<std::size_t>(t)));
  }
  plan.discarded = n - windows * static_cast<std::size_t>(t);
  return plan;
}

// ---------------------------------------------------------------------------
// Modalities
// ---------------------------------------------------------------------------

inline ChannelStats night_stats(const std::vector<VideoClip>& clips) {
  ChannelStats s;
  double count = 0;
  for (const auto& clip : clips) {
    if (clip.lighting != Lighting::kNight) continue;
    for (const Frame& f : clip.frames) {
      const int px = f.dim(0) * f.dim(1);
      for (int i = 0; i < px; ++i) {
        s.mean_r += f[static_cast<std::size_t>(i * 3 + 0)];
        s.mean_g += f[static_cast<std::size_t>(i * 3 + 1)];
        s.mean_b += f[static_cast<std::size_t>(i * 3 + 2)];
      }
      count += px;
    }
  }
  if (count == 0) throw std::invalid_argument("night_stats: no night-tagged clips");
  s.mean_r /= count;
  s.mean_g /= count;
  s.mean_b /= count;
  return s;
}

// out_c = round((in_c / 255) * mean_c): normalize to [0,1], weight by the
// night-channel mean, expand back to the byte range.
inline Frame nightify(const Frame& f, const ChannelStats& stats) {
  if (f.dim(2) != 3) throw std::invalid_argument("nightify expects RGB input");
  Frame out(f.shape());
  const double m[3] = {stats.mean_r, stats.mean_g, stats.mean_b};
  const int px = f.dim(0) * f.dim(1);
  for (int i = 0; i < px; ++i)
    for (int c = 0; c < 3; ++c) {
      const std::size_t idx = static_cast<std::size_t>(i * 3 + c);
      out[idx] = static_cast<std::uint8_t>(std::lround(f[idx] / 255.0 * m[c]));
    }
  return out;
}

// weight_c = N_total / (num_classes * count_c); inverse frequency, so every
// class contributes the same total mass.
inline ClassWeights class_weights(const std::array<int, kNumClasses>& counts) {
  int total = 0;
  for (int c : counts) {
    if (c < 1) throw std::invalid_argument("class_weights: every class needs at least one sample");
    total += c;
  }
  ClassWeights w;
  for (int c = 0; c < kNumClasses; ++c)
    w.w[static_cast<std::size_t>(c)] =
        static_cast<double>(total) / (static_cast<double>(kNumClasses) * counts[static_cast<std::size_t>(c)]);
  return w;
}

inline std::array<int, kNumClasses> label_counts(const std::vector<int>& labels) {
  std::array<int, kNumClasses> counts{};
  for (int l : labels) counts[static_cast<std::size_t>(l)]++;
  return counts;
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

enum class SplitPolicy {
  kMainVsClipped,  // main videos -> train/val, clipped database -> test
  kStratified,     // 64/16/20% by clip with stratified labels (synthetic mode)
};

struct ClipSplit {
  std::vector<const VideoClip*> train, val, test;
};

inline ClipSplit split_dataset(const std::vector<VideoClip>& clips, SplitPolicy policy,
                               std::uint64_t seed = 0, double val_fraction = 0.15) {
  ClipSplit split;
  if (policy == SplitPolicy::kMainVsClipped) {
    std::vector<const VideoClip*> main;
    for (const auto& c : clips)
      (c.split_tag == "clipped" ? split.test : main).push_back(&c);
    if (split.test.empty() || main.empty())
      throw std::invalid_argument(
          "main-vs-clipped policy needs both main and clipped sources present");
    for (const auto* a : main)
      for (const auto* b : split.test)
        if (a->source_id == b->source_id)
          throw std::invalid_argument("split sources overlap: " + a->source_id);
    // Validation is held out from the main pool per class, deterministic.
    std::map<int, std::vector<const VideoClip*>> by_class;
    for (const auto* c : main) by_class[c->labels.empty() ? 0 : c->labels[0]].push_back(c);
    Rng rng(mix_seed(seed, 0x5p117));
    for (auto& [cls, list] : by_class) {
      shuffle(list, rng);
      const std::size_t nval = static_cast<std::size_t>(
          std::max(1.0, std::floor(val_fraction * static_cast<double>(list.size()))));
      for (std::size_t i = 0; i < list.size(); ++i)
        (i < nval ? split.val : split.train).push_back(list[i]);
    }
    return split;
  }
  // Stratified 64/16/20 by clip.
  std::map<int, std::vector<const VideoClip*>> by_class;
  for (const auto& c : clips) by_class[c.labels.empty() ? 0 : c.labels[0]].push_back(&c);
  Rng rng(mix_seed(seed, 0x517a7));
  for (auto& [cls, list] : by_class) {
    shuffle(list, rng);
    const std::size_t n = list.size();
    std::size_t ntest = static_cast<std::size_t>(std::lround(0.20 * static_cast<double>(n)));
    std::size_t nval = static_cast<std::size_t>(std::lround(0.16 * static_cast<double>(n)));
    if (n >= 3) {  // every subset keeps at least one clip per class
      ntest = std::max<std::size_t>(ntest, 1);
      nval = std::max<std::size_t>(nval, 1);
      if (ntest + nval >= n) nval = n - ntest - 1;
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (i < ntest) split.test.push_back(list[i]);
      else if (i < ntest + nval) split.val.push_back(list[i]);
      else split.train.push_back(list[i]);
    }
  }
  if (split.train.empty() || split.val.empty() || split.test.empty())
    throw std::invalid_argument("stratified split produced an empty subset; add more clips");
  return split;
}

// ---------------------------------------------------------------------------
// Dataset assembly: clips -> aligned image and flow cuboid datasets.
// ---------------------------------------------------------------------------

struct PipelineOptions {
  int t = 8;
  int height = 96;
  int width = 128;
  int downsample_step = 5;
  Modality modality = Modality::kNightified;
  int flow_levels = 3;
  int flow_iters = 3;
  int flow_window = 15;
  double flow_sigma = 1.5;

  // Expansion windows must fit the frame; small desk-scale frames shrink it.
  int effective_flow_window() const {
    int w = std::min(flow_window, std::min(height, width));
    if (w % 2 == 0) --w;
    return std::max(w, 3);
  }
};

struct SplitCuboids {
  CuboidDataset image;
  CuboidDataset flow;
  std::size_t discarded_frames = 0;
};

// Runs the full per-clip pipeline over one split. Flow is computed on the
// luma of the standardized, downsampled frames before any recoloring; the
// image stream sees the requested modality scaled to [0,1].
inline SplitCuboids build_split(const std::vector<const VideoClip*>& clips,
                                const PipelineOptions& opt, const ChannelStats* stats,
                                const std::string& split_name) {
  if (opt.modality == Modality::kNightified && stats == nullptr)
    throw std::invalid_argument("nightified modality requires channel stats from night clips");
  const int t = opt.t, h = opt.height, w = opt.width;
  const int img_c = opt.modality == Modality::kGrayscale ? 1 : 3;

  std::vector<float> img_data, flow_data;
  std::vector<int> labels;
  std::size_t discarded = 0;

  const int fw = opt.effective_flow_window();
  for (const VideoClip* clip : clips) {
    auto std_frames = standardize_frames(*clip, h, w);
    auto [frames, frame_labels] = temporal_downsample(std_frames, clip->labels, opt.downsample_step);
    auto plan = plan_windows(frame_labels, t);
    discarded += plan.discarded;
    if (plan.starts.empty()) continue;

    // Luma planes for the flow stream (pre-recoloring).
    std::vector<Tensor<double>> luma;
    luma.reserve(frames.size());
    for (const Frame& f : frames) luma.push_back(luma_plane(f));

    for (std::size_t wi = 0; wi < plan.starts.size(); ++wi) {
      const std::size_t lo = plan.starts[wi];
      labels.push_back(plan.labels[wi]);
      // Image cuboid in the requested modality, scaled to [0,1].
      for (int k = 0; k < t; ++k) {
        const Frame& src = frames[lo + static_cast<std::size_t>(k)];
        Frame f = src;
        if (opt.modality == Modality::kNightified) f = nightify(src, *stats);
        else if (opt.modality == Modality::kGrayscale) f = to_grayscale(src);
        for (std::size_t i = 0; i < f.size(); ++i)
          img_data.push_back(static_cast<float>(f[i]) / 255.0f);
      }
      // Flow cuboid: fields k -> k+1; the final pair borrows the next
      // downsampled frame when one exists, else repeats the last frame
      // (zero flow).
      for (int k = 0; k < t; ++k) {
        const std::size_t a = lo + static_cast<std::size_t>(k);
        const std::size_t b = std::min(a + 1, frames.size() - 1);
        auto field = flow_estimate(luma[a], luma[b], opt.flow_levels, opt.flow_iters, fw,
                                   opt.flow_sigma)
                         .field;
        flow_data.insert(flow_data.end(), field.data(), field.data() + field.size());
      }
    }
  }

  SplitCuboids out;
  const int n = static_cast<int>(labels.size());
  out.discarded_frames = discarded;
  if (n == 0) {
    out.image.cuboids = Tensor<float>::zeros({1, 1, 1, 1, 1});
    out.flow.cuboids = Tensor<float>::zeros({1, 1, 1, 1, 1});
    out.image.labels.clear();
    return out;
  }
  out.image.cuboids = Tensor<float>({n, t, h, w, img_c}, std::move(img_data));
  out.image.labels = labels;
  out.image.modality = opt.modality;
  out.image.split = split_name;
  out.flow.cuboids = Tensor<float>({n, t, h, w, 2}, std::move(flow_data));
  out.flow.labels = labels;
  out.flow.modality = Modality::kFlow;
  out.flow.split = split_name;
  return out;
}

}  // namespace stshare
