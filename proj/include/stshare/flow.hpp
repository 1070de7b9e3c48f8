#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "stshare/tensor.hpp"

namespace stshare {

// Dense two-frame optical flow via polynomial expansion: every pixel
// neighborhood is approximated by f(p + d) ~ d^T A d + b^T d + c under a
// Gaussian applicability window, and displacements fall out of the change in
// the linear term, refined coarse-to-fine over an image pyramid.
//
// Flow fields are [H, W, 2] float32 with channels (dx, dy) in pixels per
// frame step: content moving right by 3 px yields dx = +3.

// Per-pixel quadratic coefficients. A is symmetric: [[axx, axy], [axy, ayy]].
struct PolyExpansion {
  int h = 0, w = 0;
  std::vector<double> c, bx, by, axx, ayy, axy;

  std::size_t at(int y, int x) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x);
  }
};

struct FlowResult {
  Tensor<float> field;  // [H, W, 2]
  bool degenerate = false;
};

namespace flowdetail {

inline double clamp_fetch(const Tensor<double>& img, int y, int x) {
  y = std::clamp(y, 0, img.dim(0) - 1);
  x = std::clamp(x, 0, img.dim(1) - 1);
  return img[static_cast<std::size_t>(y * img.dim(1) + x)];
}

// Solves the symmetric 6x6 normal-equations system by Gaussian elimination
// with partial pivoting, returning the inverse.
inline std::array<std::array<double, 6>, 6> invert6(std::array<std::array<double, 6>, 6> g) {
  std::array<std::array<double, 6>, 6> inv{};
  for (int i = 0; i < 6; ++i) inv[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] = 1.0;
  for (int col = 0; col < 6; ++col) {
    int piv = col;
    for (int r = col + 1; r < 6; ++r)
      if (std::abs(g[static_cast<std::size_t>(r)][static_cast<std::size_t>(col)]) >
          std::abs(g[static_cast<std::size_t>(piv)][static_cast<std::size_t>(col)]))
        piv = r;
    std::swap(g[static_cast<std::size_t>(col)], g[static_cast<std::size_t>(piv)]);
    std::swap(inv[static_cast<std::size_t>(col)], inv[static_cast<std::size_t>(piv)]);
    const double d = g[static_cast<std::size_t>(col)][static_cast<std::size_t>(col)];
    if (std::abs(d) < 1e-300) throw std::runtime_error("poly expansion: singular normal equations");
    for (int j = 0; j < 6; ++j) {
      g[static_cast<std::size_t>(col)][static_cast<std::size_t>(j)] /= d;
      inv[static_cast<std::size_t>(col)][static_cast<std::size_t>(j)] /= d;
    }
    for (int r = 0; r < 6; ++r) {
      if (r == col) continue;
      const double f = g[static_cast<std::size_t>(r)][static_cast<std::size_t>(col)];
      if (f == 0.0) continue;
      for (int j = 0; j < 6; ++j) {
        g[static_cast<std::size_t>(r)][static_cast<std::size_t>(j)] -=
            f * g[static_cast<std::size_t>(col)][static_cast<std::size_t>(j)];
        inv[static_cast<std::size_t>(r)][static_cast<std::size_t>(j)] -=
            f * inv[static_cast<std::size_t>(col)][static_cast<std::size_t>(j)];
      }
    }
  }
  return inv;
}

inline std::vector<double> gaussian_taps(int w, double sigma) {
  const int r = w / 2;
  std::vector<double> taps(static_cast<std::size_t>(w));
  for (int i = -r; i <= r; ++i)
    taps[static_cast<std::size_t>(i + r)] = std::exp(-0.5 * (i * i) / (sigma * sigma));
  return taps;
}

}  // namespace flowdetail

// Weighted least-squares quadratic fit per pixel, basis (1, x, y, x^2, y^2,
// xy) with x = column offset and y = row offset, Gaussian applicability of
// std `sigma` over an odd `window`. Borders replicate edge pixels.
inline PolyExpansion poly_expand(const Tensor<double>& frame, int window, double sigma) {
  if (frame.rank() != 2) throw std::invalid_argument("poly_expand expects a [H, W] frame");
  if (window < 3 || window % 2 == 0)
    throw std::invalid_argument("poly_expand window must be odd and >= 3");
  const int h = frame.dim(0), w = frame.dim(1);
  if (h < window || w < window)
    throw std::invalid_argument("poly_expand: frame smaller than window");
  const int r = window / 2;
  const auto taps = flowdetail::gaussian_taps(window, sigma);

  // Constant normal-equations matrix G = sum a(d) phi(d) phi(d)^T.
  std::array<std::array<double, 6>, 6> g{};
  for (int y = -r; y <= r; ++y)
    for (int x = -r; x <= r; ++x) {
      const double a = taps[static_cast<std::size_t>(y + r)] * taps[static_cast<std::size_t>(x + r)];
      const double phi[6] = {1.0, double(x), double(y), double(x) * x, double(y) * y,
                             double(x) * y};
      for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j)
          g[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] += a * phi[i] * phi[j];
    }
  const auto ginv = flowdetail::invert6(g);

  // Separable moments: vertical passes with {a, a*y, a*y^2}, then horizontal
  // with {a, a*x, a*x^2}.
  const std::size_t n = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  std::vector<double> v0(n), v1(n), v2(n);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s0 = 0, s1 = 0, s2 = 0;
      for (int dy = -r; dy <= r; ++dy) {
        const double f = flowdetail::clamp_fetch(frame, y + dy, x);
        const double a = taps[static_cast<std::size_t>(dy + r)];
        s0 += a * f;
        s1 += a * dy * f;
        s2 += a * dy * dy * f;
      }
      const std::size_t i = static_cast<std::size_t>(y * w + x);
      v0[i] = s0;
      v1[i] = s1;
      v2[i] = s2;
    }

  PolyExpansion pe;
  pe.h = h;
  pe.w = w;
  pe.c.resize(n);
  pe.bx.resize(n);
  pe.by.resize(n);
  pe.axx.resize(n);
  pe.ayy.resize(n);
  pe.axy.resize(n);

  auto hfetch = [&](const std::vector<double>& plane, int y, int x) {
    x = std::clamp(x, 0, w - 1);
    return plane[static_cast<std::size_t>(y * w + x)];
  };

  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double m[6] = {0, 0, 0, 0, 0, 0};  // (1, x, y, x^2, y^2, xy)
      for (int dx = -r; dx <= r; ++dx) {
        const double a = taps[static_cast<std::size_t>(dx + r)];
        const double f0 = hfetch(v0, y, x + dx);
        const double f1 = hfetch(v1, y, x + dx);
        const double f2 = hfetch(v2, y, x + dx);
        m[0] += a * f0;
        m[1] += a * dx * f0;
        m[2] += a * f1;
        m[3] += a * dx * dx * f0;
        m[4] += a * f2;
        m[5] += a * dx * f1;
      }
      double coef[6];
      for (int i = 0; i < 6; ++i) {
        double acc = 0.0;
        for (int j = 0; j < 6; ++j)
          acc += ginv[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] * m[j];
        coef[i] = acc;
      }
      const std::size_t idx = pe.at(y, x);
      pe.c[idx] = coef[0];
      pe.bx[idx] = coef[1];
      pe.by[idx] = coef[2];
      pe.axx[idx] = coef[3];
      pe.ayy[idx] = coef[4];
      pe.axy[idx] = coef[5] * 0.5;  // A stores half of the cross coefficient
    }
  return pe;
}

namespace flowdetail {

inline Tensor<double> downsample2(const Tensor<double>& img) {
  const int h = img.dim(0), w = img.dim(1);
  // 5-tap binomial blur, then decimation by 2.
  static const double k[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};
  Tensor<double> tmp({h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0;
      for (int d = -2; d <= 2; ++d) s += k[d + 2] * clamp_fetch(img, y, x + d);
      tmp[static_cast<std::size_t>(y * w + x)] = s;
    }
  Tensor<double> tmp2({h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0;
      for (int d = -2; d <= 2; ++d) s += k[d + 2] * clamp_fetch(tmp, y + d, x);
      tmp2[static_cast<std::size_t>(y * w + x)] = s;
    }
  const int oh = (h + 1) / 2, ow = (w + 1) / 2;
  Tensor<double> out({oh, ow});
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x)
      out[static_cast<std::size_t>(y * ow + x)] =
          tmp2[static_cast<std::size_t>(std::min(2 * y, h - 1) * w + std::min(2 * x, w - 1))];
  return out;
}

// Box average with clamped borders, separable, applied to a raw plane.
inline void box_blur(std::vector<double>& plane, int h, int w, int window) {
  const int r = window / 2;
  std::vector<double> tmp(plane.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0;
      for (int d = -r; d <= r; ++d) s += plane[static_cast<std::size_t>(y * w + std::clamp(x + d, 0, w - 1))];
      tmp[static_cast<std::size_t>(y * w + x)] = s / window;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0;
      for (int d = -r; d <= r; ++d) s += tmp[static_cast<std::size_t>(std::clamp(y + d, 0, h - 1) * w + x)];
      plane[static_cast<std::size_t>(y * w + x)] = s / window;
    }
}

}  // namespace flowdetail

// Coarse-to-fine displacement estimation between two grayscale frames in
// [0,1]. `levels` pyramid levels (clamped so the expansion window always
// fits), `iters` refinement passes per level, odd window `window` used for
// both the expansion applicability and the neighborhood averaging.
inline FlowResult flow_estimate(const Tensor<double>& prev, const Tensor<double>& next, int levels,
                                int iters, int window, double sigma = 1.5) {
  if (prev.rank() != 2 || next.rank() != 2 || !(prev.shape() == next.shape()))
    throw std::invalid_argument("flow_estimate: frames must share a [H, W] shape");
  if (levels < 1) throw std::invalid_argument("flow_estimate: levels must be >= 1");
  const int h = prev.dim(0), w = prev.dim(1);

  FlowResult result;
  result.field = Tensor<float>::zeros({h, w, 2});

  auto span = [](const Tensor<double>& t) {
    double lo = t[0], hi = t[0];
    for (std::size_t i = 0; i < t.size(); ++i) {
      lo = std::min(lo, t[i]);
      hi = std::max(hi, t[i]);
    }
    return hi - lo;
  };
  if (span(prev) < 1e-12 && span(next) < 1e-12) {
    result.degenerate = true;  // aperture problem everywhere; report zero flow
    return result;
  }

  // Pyramid (level 0 = finest), truncated when frames get smaller than the
  // expansion window.
  std::vector<Tensor<double>> pyr_prev{prev}, pyr_next{next};
  for (int l = 1; l < levels; ++l) {
    Tensor<double> p = flowdetail::downsample2(pyr_prev.back());
    if (p.dim(0) < window || p.dim(1) < window) break;
    pyr_prev.push_back(std::move(p));
    pyr_next.push_back(flowdetail::downsample2(pyr_next.back()));
  }
  const int nlevels = static_cast<int>(pyr_prev.size());
  const double cap_fine = std::ldexp(static_cast<double>(window), levels);  // 2^L * w

  std::vector<double> dx, dy;  // displacement at the current level
  for (int l = nlevels - 1; l >= 0; --l) {
    const Tensor<double>& p1 = pyr_prev[static_cast<std::size_t>(l)];
    const Tensor<double>& p2 = pyr_next[static_cast<std::size_t>(l)];
    const int lh = p1.dim(0), lw = p1.dim(1);
    const std::size_t n = static_cast<std::size_t>(lh) * static_cast<std::size_t>(lw);

    if (l == nlevels - 1) {
      dx.assign(n, 0.0);
      dy.assign(n, 0.0);
    } else {
      // Upsample the coarser displacement bilinearly and double it.
      const int ch = pyr_prev[static_cast<std::size_t>(l + 1)].dim(0);
      const int cw = pyr_prev[static_cast<std::size_t>(l + 1)].dim(1);
      std::vector<double> ndx(n), ndy(n);
      for (int y = 0; y < lh; ++y)
        for (int x = 0; x < lw; ++x) {
          const double sy = std::min(y * 0.5, ch - 1.0);
          const double sx = std::min(x * 0.5, cw - 1.0);
          const int y0 = static_cast<int>(sy), x0 = static_cast<int>(sx);
          const int y1 = std::min(y0 + 1, ch - 1), x1 = std::min(x0 + 1, cw - 1);
          const double fy = sy - y0, fx = sx - x0;
          auto bil = [&](const std::vector<double>& f) {
            return (1 - fy) * ((1 - fx) * f[static_cast<std::size_t>(y0 * cw + x0)] +
                               fx * f[static_cast<std::size_t>(y0 * cw + x1)]) +
                   fy * ((1 - fx) * f[static_cast<std::size_t>(y1 * cw + x0)] +
                         fx * f[static_cast<std::size_t>(y1 * cw + x1)]);
          };
          ndx[static_cast<std::size_t>(y * lw + x)] = 2.0 * bil(dx);
          ndy[static_cast<std::size_t>(y * lw + x)] = 2.0 * bil(dy);
        }
      dx = std::move(ndx);
      dy = std::move(ndy);
    }

    const PolyExpansion e1 = poly_expand(p1, window, sigma);
    const PolyExpansion e2 = poly_expand(p2, window, sigma);
    const double cap = cap_fine / std::ldexp(1.0, l);  // same bound in level units

    for (int it = 0; it < iters; ++it) {
      std::vector<double> g11(n), g12(n), g22(n), hb1(n), hb2(n);
      for (int y = 0; y < lh; ++y)
        for (int x = 0; x < lw; ++x) {
          const std::size_t i = static_cast<std::size_t>(y * lw + x);
          const int xs = std::clamp(static_cast<int>(std::lround(x + dx[i])), 0, lw - 1);
          const int ys = std::clamp(static_cast<int>(std::lround(y + dy[i])), 0, lh - 1);
          const double dxt = xs - x, dyt = ys - y;  // displacement actually used
          const std::size_t j = e2.at(ys, xs);
          const double a11 = 0.5 * (e1.axx[i] + e2.axx[j]);
          const double a12 = 0.5 * (e1.axy[i] + e2.axy[j]);
          const double a22 = 0.5 * (e1.ayy[i] + e2.ayy[j]);
          const double db1 = -0.5 * (e2.bx[j] - e1.bx[i]) + (a11 * dxt + a12 * dyt);
          const double db2 = -0.5 * (e2.by[j] - e1.by[i]) + (a12 * dxt + a22 * dyt);
          g11[i] = a11 * a11 + a12 * a12;
          g12[i] = a11 * a12 + a12 * a22;
          g22[i] = a12 * a12 + a22 * a22;
          hb1[i] = a11 * db1 + a12 * db2;
          hb2[i] = a12 * db1 + a22 * db2;
        }
      flowdetail::box_blur(g11, lh, lw, window);
      flowdetail::box_blur(g12, lh, lw, window);
      flowdetail::box_blur(g22, lh, lw, window);
      flowdetail::box_blur(hb1, lh, lw, window);
      flowdetail::box_blur(hb2, lh, lw, window);
      constexpr double kReg = 1e-6;  // aperture-problem regularization
      for (std::size_t i = 0; i < n; ++i) {
        const double a = g11[i] + kReg, b = g12[i], c = g22[i] + kReg;
        const double det = a * c - b * b;
        const double nx = (c * hb1[i] - b * hb2[i]) / det;
        const double ny = (a * hb2[i] - b * hb1[i]) / det;
        dx[i] = std::clamp(nx, -cap, cap);
        dy[i] = std::clamp(ny, -cap, cap);
      }
    }
  }

  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y * w + x);
      result.field[i * 2 + 0] = static_cast<float>(dx[i]);
      result.field[i * 2 + 1] = static_cast<float>(dy[i]);
    }
  return result;
}

// flow[i] maps frame i onto frame i+1; T+1 frames give T fields.
inline std::vector<Tensor<float>> flow_sequence(const std::vector<Tensor<double>>& frames,
                                                int levels = 3, int iters = 3, int window = 15,
                                                double sigma = 1.5) {
  if (frames.size() < 2) throw std::invalid_argument("flow_sequence needs at least 2 frames");
  std::vector<Tensor<float>> fields;
  fields.reserve(frames.size() - 1);
  for (std::size_t i = 0; i + 1 < frames.size(); ++i)
    fields.push_back(flow_estimate(frames[i], frames[i + 1], levels, iters, window, sigma).field);
  return fields;
}

// Stacks T flow fields into a [T, H, W, 2] cuboid.
inline Tensor<float> stack_flow(const std::vector<Tensor<float>>& fields) {
  if (fields.empty()) throw std::invalid_argument("stack_flow: no fields");
  const int h = fields[0].dim(0), w = fields[0].dim(1);
  Tensor<float> out({static_cast<int>(fields.size()), h, w, 2});
  std::size_t off = 0;
  for (const auto& f : fields) {
    if (f.dim(0) != h || f.dim(1) != w) throw std::invalid_argument("stack_flow: shape mismatch");
    std::copy(f.data(), f.data() + f.size(), out.data() + off);
    off += f.size();
  }
  return out;
}

}  // namespace stshare
