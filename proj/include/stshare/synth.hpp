#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "stshare/pipeline.hpp"

namespace stshare {

// Procedural stand-in for real home-cage footage: eight behaviour archetypes
// that a dual-stream model can separate jointly from appearance (where the
// animal is, its pose) and motion (how it moves). Everything is seeded, so a
// dataset is a pure function of (seed, clips_per_class, T, H, W).
//
//   drink          pinned at the top-left spout, fast small head bob
//   eat            pinned at the top-right hopper, slow chewing pulse
//   groom          static body, rapid paw flicker beside the head
//   hang           suspended from the ceiling bars, pendulum sway
//   micromovement  resting pose with sub-pixel jitter
//   rear           floor pose periodically stretching tall against the wall
//   rest           curled, perfectly still
//   walk           constant-velocity horizontal sweep, bouncing at walls

struct SynthOptions {
  int clips_per_class = 16;
  int t = 8;               // cuboid length the clips are destined for
  int height = 96;
  int width = 128;
  int downsample_step = 5; // raw frame count is chosen to survive this step
  int night_clips = 2;     // first clips rendered as infrared night footage
};

namespace synthdetail {

struct Canvas {
  int h, w;
  std::vector<double> r, g, b;
  Canvas(int h, int w)
      : h(h), w(w), r(static_cast<std::size_t>(h) * w), g(r.size()), b(r.size()) {}
  std::size_t at(int y, int x) const { return static_cast<std::size_t>(y) * w + x; }
};

inline void fill_background(Canvas& c, Rng& rng) {
  for (int y = 0; y < c.h; ++y) {
    const double shade = 205.0 - 60.0 * y / c.h;  // lit top, dim bedding
    for (int x = 0; x < c.w; ++x) {
      const std::size_t i = c.at(y, x);
      c.r[i] = shade * 0.96;
      c.g[i] = shade * 0.93;
      c.b[i] = shade * 0.88;
    }
  }
  // Static speckle so the flow field has texture to hold on to.
  const int specks = c.h * c.w / 40;
  for (int k = 0; k < specks; ++k) {
    const int x = static_cast<int>(rng.next_index(static_cast<std::uint64_t>(c.w)));
    const int y = static_cast<int>(rng.next_index(static_cast<std::uint64_t>(c.h)));
    const double d = rng.uniform(-14.0, 14.0);
    const std::size_t i = c.at(y, x);
    c.r[i] += d;
    c.g[i] += d;
    c.b[i] += d * 0.9;
  }
  // Floor line.
  const int floor_y = c.h - std::max(2, c.h / 8);
  for (int x = 0; x < c.w; ++x) {
    const std::size_t i = c.at(floor_y, x);
    c.r[i] *= 0.75;
    c.g[i] *= 0.75;
    c.b[i] *= 0.75;
  }
  // Water spout (top-left) and food hopper (top-right), present in every
  // clip so they never leak the label by themselves.
  const int sx = c.w / 10, sy = c.h / 6;
  for (int y = 0; y < sy; ++y)
    for (int x = sx - std::max(1, c.w / 40); x <= sx + std::max(1, c.w / 40); ++x)
      if (x >= 0 && x < c.w) {
        const std::size_t i = c.at(y, x);
        c.r[i] = 140;
        c.g[i] = 145;
        c.b[i] = 165;
      }
  const int hx0 = c.w - c.w / 4, hx1 = c.w - c.w / 10;
  for (int y = 0; y < c.h / 7; ++y)
    for (int x = hx0; x < hx1; ++x) {
      const std::size_t i = c.at(y, x);
      c.r[i] = 120;
      c.g[i] = 100;
      c.b[i] = 80;
    }
}

inline void blend_pixel(Canvas& c, int y, int x, double alpha, double pr, double pg, double pb) {
  if (y < 0 || y >= c.h || x < 0 || x >= c.w || alpha <= 0.0) return;
  const std::size_t i = c.at(y, x);
  c.r[i] = (1 - alpha) * c.r[i] + alpha * pr;
  c.g[i] = (1 - alpha) * c.g[i] + alpha * pg;
  c.b[i] = (1 - alpha) * c.b[i] + alpha * pb;
}

// Soft-edged ellipse, the basic body part.
inline void draw_ellipse(Canvas& c, double cx, double cy, double rx, double ry, double shade) {
  const int x0 = static_cast<int>(std::floor(cx - rx - 1)), x1 = static_cast<int>(std::ceil(cx + rx + 1));
  const int y0 = static_cast<int>(std::floor(cy - ry - 1)), y1 = static_cast<int>(std::ceil(cy + ry + 1));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double dx = (x - cx) / rx, dy = (y - cy) / ry;
      const double d = std::sqrt(dx * dx + dy * dy);
      const double alpha = std::clamp(1.8 * (1.0 - d), 0.0, 1.0);
      blend_pixel(c, y, x, alpha, shade, shade * 0.92, shade * 0.85);
    }
}

struct MousePose {
  double cx, cy;        // body center, pixels
  double rx, ry;        // body radii
  double head_dx, head_dy;  // head offset from the body center
  bool paw = false;     // extra flickering blob (groom)
  double paw_x = 0, paw_y = 0;
};

inline void draw_mouse(Canvas& c, const MousePose& p, double shade) {
  draw_ellipse(c, p.cx, p.cy, p.rx, p.ry, shade);
  draw_ellipse(c, p.cx + p.head_dx, p.cy + p.head_dy, p.rx * 0.45, p.ry * 0.55, shade * 0.85);
  if (p.paw) draw_ellipse(c, p.paw_x, p.paw_y, std::max(1.0, p.rx * 0.22), std::max(1.0, p.ry * 0.22), shade * 1.35);
}

inline Frame render(const Canvas& c, bool night) {
  Frame f({c.h, c.w, 3});
  for (int i = 0; i < c.h * c.w; ++i) {
    double r = c.r[static_cast<std::size_t>(i)];
    double g = c.g[static_cast<std::size_t>(i)];
    double b = c.b[static_cast<std::size_t>(i)];
    if (night) {  // dim infrared-like palette
      const double luma = 0.299 * r + 0.587 * g + 0.114 * b;
      r = luma * 0.30 + 14.0;
      g = luma * 0.33 + 16.0;
      b = luma * 0.38 + 20.0;
    }
    f[static_cast<std::size_t>(i * 3 + 0)] = static_cast<std::uint8_t>(std::clamp(r, 0.0, 255.0));
    f[static_cast<std::size_t>(i * 3 + 1)] = static_cast<std::uint8_t>(std::clamp(g, 0.0, 255.0));
    f[static_cast<std::size_t>(i * 3 + 2)] = static_cast<std::uint8_t>(std::clamp(b, 0.0, 255.0));
  }
  return f;
}

}  // namespace synthdetail

inline std::vector<VideoClip> synth_generate(std::uint64_t seed, const SynthOptions& opt) {
  if (opt.clips_per_class < 1) throw std::invalid_argument("clips_per_class must be >= 1");
  if (opt.height < 12 || opt.width < 16) throw std::invalid_argument("synthetic frames too small");
  using namespace synthdetail;

  // Raw length: after step-5 downsampling, four full T-windows plus one
  // spare frame that the packer must discard.
  const int raw_frames = opt.downsample_step * (4 * opt.t + 1);
  const double hh = opt.height, ww = opt.width;
  const double body = std::max(3.0, hh / 5.5);

  std::vector<VideoClip> clips;
  int clip_index = 0;
  for (int cls = 0; cls < kNumClasses; ++cls) {
    for (int rep = 0; rep < opt.clips_per_class; ++rep, ++clip_index) {
      Rng rng(mix_seed(seed, static_cast<std::uint64_t>(clip_index) * 977 + static_cast<std::uint64_t>(cls)));
      VideoClip clip;
      clip.fps = 30.0;
      clip.lighting = clip_index < opt.night_clips ? Lighting::kNight : Lighting::kDay;
      clip.source_id = "synth_" + std::string(class_name(cls)) + "_" + std::to_string(rep);
      clip.split_tag = "main";

      // Per-clip scene variation.
      Rng scene_rng(mix_seed(seed, 0xbadceull + static_cast<std::uint64_t>(clip_index)));
      const double jitter_x = rng.uniform(-0.04, 0.04) * ww;
      const double speed = rng.uniform(0.9, 1.15);
      const double phase0 = rng.uniform(0.0, 6.28318);
      const double floor_y = hh - std::max(2.0, hh / 8) - body * 0.8;
      double walk_x = rng.uniform(0.25, 0.75) * ww;
      double walk_v = (rng.next_double() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.45, 0.6) *
                      (ww / 32.0);  // px per raw frame, ~2.6 px per kept frame
      double jx = 0.0, jy = 0.0;    // micromovement random walk state

      for (int t = 0; t < raw_frames; ++t) {
        Canvas canvas(opt.height, opt.width);
        Rng bg_rng(mix_seed(seed, 0xcafe + static_cast<std::uint64_t>(clip_index)));  // static per clip
        fill_background(canvas, bg_rng);

        const double ph = phase0 + speed * t;
        MousePose p{};
        p.rx = body;
        p.ry = body * 0.7;
        p.head_dx = body * 0.9;
        p.head_dy = -body * 0.1;
        switch (cls) {
          case 0: {  // drink: pinned at the spout, fast head bob
            p.cx = ww / 10 + body * 1.1;
            p.cy = hh / 6 + body * 0.8;
            p.head_dx = -body * 0.8;
            p.head_dy = -body * 0.35 + 0.18 * body * std::sin(2.4 * ph);
            break;
          }
          case 1: {  // eat: pinned at the hopper, slow pulse
            p.cx = ww - ww / 6 + jitter_x * 0.3;
            p.cy = hh / 5 + body * 0.9;
            p.head_dy = -body * 0.4;
            p.rx = body * (1.0 + 0.10 * std::sin(0.8 * ph));
            break;
          }
          case 2: {  // groom: static body, rapid paw flicker
            p.cx = ww * 0.45 + jitter_x;
            p.cy = floor_y;
            p.paw = true;
            p.paw_x = p.cx + body * 0.95 + 0.55 * body * std::sin(3.1 * ph);
            p.paw_y = p.cy - body * 0.45 + 0.55 * body * std::cos(3.1 * ph);
            break;
          }
          case 3: {  // hang: at the ceiling, pendulum sway
            p.cx = ww * 0.5 + jitter_x + 0.45 * body * std::sin(0.9 * ph);
            p.cy = body * 1.05 + 0.35 * body * std::sin(1.7 * ph + 1.0);
            p.ry = body * 0.95;  // stretched, clinging to the bars
            p.rx = body * 0.6;
            p.head_dx = 0;
            p.head_dy = body * 0.8;
            break;
          }
          case 4: {  // micromovement: resting pose with tiny jitter
            jx += rng.uniform(-0.35, 0.35);
            jy += rng.uniform(-0.25, 0.25);
            jx = std::clamp(jx, -1.2, 1.2);
            jy = std::clamp(jy, -0.9, 0.9);
            p.cx = ww * 0.6 + jitter_x + jx;
            p.cy = floor_y + jy;
            p.rx = body * 0.85;
            p.ry = body * 0.8;
            p.head_dx = body * 0.5;
            break;
          }
          case 5: {  // rear: stretches tall against the wall and sinks back
            const double stretch = 0.5 + 0.5 * std::sin(0.55 * ph);  // 0..1
            p.cx = ww * 0.16 + jitter_x * 0.5;
            p.ry = body * (0.75 + 0.85 * stretch);
            p.rx = body * (0.95 - 0.35 * stretch);
            p.cy = floor_y - (p.ry - body * 0.7);
            p.head_dx = 0;
            p.head_dy = -p.ry * 0.8;
            break;
          }
          case 6: {  // rest: curled and still
            p.cx = ww * 0.68 + jitter_x;
            p.cy = floor_y;
            p.rx = body * 0.9;
            p.ry = body * 0.85;
            p.head_dx = body * 0.3;
            p.head_dy = -body * 0.2;
            break;
          }
          case 7: {  // walk: horizontal sweep, bounce at the walls
            walk_x += walk_v;
            if (walk_x < body * 1.2 || walk_x > ww - body * 1.2) {
              walk_v = -walk_v;
              walk_x += 2 * walk_v;
            }
            p.cx = walk_x;
            p.cy = floor_y + 0.15 * body * std::sin(1.3 * ph);
            p.head_dx = (walk_v > 0 ? 1 : -1) * body * 0.9;
            break;
          }
        }
        draw_mouse(canvas, p, 45.0);
        clip.frames.push_back(render(canvas, clip.lighting == Lighting::kNight));
        clip.labels.push_back(cls);
      }
      clips.push_back(std::move(clip));
    }
  }
  return clips;
}

}  // namespace stshare
