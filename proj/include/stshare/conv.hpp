#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "stshare/detail/parallel.hpp"
#include "stshare/ops.hpp"
#include "stshare/tape.hpp"
#include "stshare/tensor.hpp"

namespace stshare {

// Cuboids are laid out [N, T, H, W, C] row-major (channels last), so the
// innermost loops of every kernel run over contiguous channel vectors.

struct Stride3 {
  int t = 1, h = 1, w = 1;
};

enum class Padding { kSame, kValid };

struct ConvGeom {
  int to, ho, wo;        // output dims
  int pt, ph, pw;        // pad before each axis
};

namespace detail {

inline int out_dim_same(int in, int stride) { return (in + stride - 1) / stride; }

inline int pad_before_same(int in, int out, int k, int stride) {
  const int total = std::max((out - 1) * stride + k - in, 0);
  return total / 2;
}

inline ConvGeom conv_geometry(int ti, int hi, int wi, int kt, int kh, int kw, Stride3 s,
                              Padding pad) {
  ConvGeom g{};
  if (pad == Padding::kSame) {
    g.to = out_dim_same(ti, s.t);
    g.ho = out_dim_same(hi, s.h);
    g.wo = out_dim_same(wi, s.w);
    g.pt = pad_before_same(ti, g.to, kt, s.t);
    g.ph = pad_before_same(hi, g.ho, kh, s.h);
    g.pw = pad_before_same(wi, g.wo, kw, s.w);
  } else {
    if (kt > ti || kh > hi || kw > wi)
      throw std::invalid_argument("valid conv/pool: window larger than input");
    g.to = (ti - kt) / s.t + 1;
    g.ho = (hi - kh) / s.h + 1;
    g.wo = (wi - kw) / s.w + 1;
    g.pt = g.ph = g.pw = 0;
  }
  return g;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// conv3d, cross-correlation semantics.
// x: [N,T,H,W,Ci], kernel: [kT,kH,kW,Ci,Co], bias: [Co] -> [N,To,Ho,Wo,Co]
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
void conv3d_forward_kernel(const T* __restrict x, const T* __restrict k, const T* __restrict bias,
                           T* __restrict y, int n, int ti, int hi, int wi, int ci, int kt, int kh,
                           int kw, int co, Stride3 s, const ConvGeom& g) {
  const std::int64_t rows = static_cast<std::int64_t>(n) * g.to * g.ho;
#pragma omp parallel if (parallel_enabled() && rows > 1)
  {
    // One full output W-row is accumulated in an L1-resident buffer so the
    // hot loop never re-reads the destination.
    std::vector<T> acc(static_cast<std::size_t>(g.wo) * co);
#pragma omp for schedule(static)
    for (std::int64_t r = 0; r < rows; ++r) {
      const int hh = static_cast<int>(r % g.ho);
      const int tt = static_cast<int>((r / g.ho) % g.to);
      const int nn = static_cast<int>(r / (static_cast<std::int64_t>(g.ho) * g.to));
      if (bias) {
        for (int ww = 0; ww < g.wo; ++ww)
          for (int c = 0; c < co; ++c) acc[static_cast<std::size_t>(ww) * co + c] = bias[c];
      } else {
        std::fill(acc.begin(), acc.end(), T(0));
      }
      for (int a = 0; a < kt; ++a) {
        const int tin = tt * s.t - g.pt + a;
        if (tin < 0 || tin >= ti) continue;
        for (int b = 0; b < kh; ++b) {
          const int hin = hh * s.h - g.ph + b;
          if (hin < 0 || hin >= hi) continue;
          const T* xplane =
              x + (((static_cast<std::int64_t>(nn) * ti + tin) * hi + hin) * wi) * ci;
          for (int cc = 0; cc < kw; ++cc) {
            // Output positions whose tap stays inside [0, wi).
            int wlo = 0;
            while (wlo < g.wo && wlo * s.w - g.pw + cc < 0) ++wlo;
            int whi = g.wo;
            while (whi > wlo && (whi - 1) * s.w - g.pw + cc >= wi) --whi;
            const T* krow = k + ((static_cast<std::int64_t>(a) * kh + b) * kw + cc) * ci * co;
            for (int ww = wlo; ww < whi; ++ww) {
              const T* __restrict xrow = xplane + (ww * s.w - g.pw + cc) * ci;
              T* __restrict arow = acc.data() + static_cast<std::size_t>(ww) * co;
              for (int ic = 0; ic < ci; ++ic) {
                const T xv = xrow[ic];
                const T* __restrict kc = krow + static_cast<std::int64_t>(ic) * co;
                for (int c = 0; c < co; ++c) arow[c] += xv * kc[c];
              }
            }
          }
        }
      }
      T* yrow = y + (((static_cast<std::int64_t>(nn) * g.to + tt) * g.ho + hh) * g.wo) * co;
      std::copy(acc.begin(), acc.end(), yrow);
    }
  }
}

// Gradient w.r.t. the input, gather formulation: each thread owns a set of
// input rows, so accumulation is race-free and deterministic.
template <typename T>
void conv3d_backward_input(const T* __restrict gy, const T* __restrict k, T* __restrict gx, int n,
                           int ti, int hi, int wi, int ci, int kt, int kh, int kw, int co,
                           Stride3 s, const ConvGeom& g) {
  // Transposed kernel [kt,kh,kw,co,ci] turns the hot loop into a streaming
  // axpy over ci instead of a serial dot product.
  const std::size_t kvol = static_cast<std::size_t>(kt) * kh * kw;
  std::vector<T> ktr(kvol * static_cast<std::size_t>(ci) * co);
  for (std::size_t v = 0; v < kvol; ++v)
    for (int ic = 0; ic < ci; ++ic)
      for (int c = 0; c < co; ++c)
        ktr[(v * co + static_cast<std::size_t>(c)) * ci + ic] =
            k[(v * ci + static_cast<std::size_t>(ic)) * co + c];

  const std::int64_t rows = static_cast<std::int64_t>(n) * ti * hi;
#pragma omp parallel if (parallel_enabled() && rows > 1)
  {
    std::vector<T> acc(static_cast<std::size_t>(wi) * ci);
#pragma omp for schedule(static)
    for (std::int64_t r = 0; r < rows; ++r) {
      const int hin = static_cast<int>(r % hi);
      const int tin = static_cast<int>((r / hi) % ti);
      const int nn = static_cast<int>(r / (static_cast<std::int64_t>(hi) * ti));
      std::fill(acc.begin(), acc.end(), T(0));
      for (int a = 0; a < kt; ++a) {
        const int tnum = tin + g.pt - a;
        if (tnum < 0 || tnum % s.t) continue;
        const int tt = tnum / s.t;
        if (tt >= g.to) continue;
        for (int b = 0; b < kh; ++b) {
          const int hnum = hin + g.ph - b;
          if (hnum < 0 || hnum % s.h) continue;
          const int hh = hnum / s.h;
          if (hh >= g.ho) continue;
          const T* gyplane =
              gy + (((static_cast<std::int64_t>(nn) * g.to + tt) * g.ho + hh) * g.wo) * co;
          for (int cc = 0; cc < kw; ++cc) {
            // Output columns ww whose tap cc lands inside [0, wi).
            int wlo = 0;
            while (wlo < g.wo && wlo * s.w - g.pw + cc < 0) ++wlo;
            int whi = g.wo;
            while (whi > wlo && (whi - 1) * s.w - g.pw + cc >= wi) --whi;
            const T* kslab =
                ktr.data() + ((static_cast<std::size_t>(a) * kh + b) * kw + cc) * ci * co;
            for (int ww = wlo; ww < whi; ++ww) {
              const int win = ww * s.w - g.pw + cc;
              const T* __restrict gyrow = gyplane + static_cast<std::int64_t>(ww) * co;
              T* __restrict arow = acc.data() + static_cast<std::size_t>(win) * ci;
              for (int c = 0; c < co; ++c) {
                const T gv = gyrow[c];
                const T* __restrict kc = kslab + static_cast<std::int64_t>(c) * ci;
                for (int ic = 0; ic < ci; ++ic) arow[ic] += gv * kc[ic];
              }
            }
          }
        }
      }
      T* gxrow = gx + (((static_cast<std::int64_t>(nn) * ti + tin) * hi + hin) * wi) * ci;
      for (std::size_t i = 0; i < acc.size(); ++i) gxrow[i] += acc[i];
    }
  }
}

// Gradient w.r.t. the kernel: each thread owns one (kt,kh,kw) slab of gk.
template <typename T>
void conv3d_backward_kernelw(const T* __restrict x, const T* __restrict gy, T* __restrict gk,
                             int n, int ti, int hi, int wi, int ci, int kt, int kh, int kw, int co,
                             Stride3 s, const ConvGeom& g) {
  const int kvol = kt * kh * kw;
#pragma omp parallel for schedule(static) if (parallel_enabled() && kvol > 1)
  for (int kidx = 0; kidx < kvol; ++kidx) {
    const int cc = kidx % kw;
    const int b = (kidx / kw) % kh;
    const int a = kidx / (kw * kh);
    T* __restrict gkslab = gk + static_cast<std::int64_t>(kidx) * ci * co;
    int wlo = 0;
    while (wlo < g.wo && wlo * s.w - g.pw + cc < 0) ++wlo;
    int whi = g.wo;
    while (whi > wlo && (whi - 1) * s.w - g.pw + cc >= wi) --whi;
    for (int nn = 0; nn < n; ++nn)
      for (int tt = 0; tt < g.to; ++tt) {
        const int tin = tt * s.t - g.pt + a;
        if (tin < 0 || tin >= ti) continue;
        for (int hh = 0; hh < g.ho; ++hh) {
          const int hin = hh * s.h - g.ph + b;
          if (hin < 0 || hin >= hi) continue;
          const T* xplane =
              x + (((static_cast<std::int64_t>(nn) * ti + tin) * hi + hin) * wi) * ci;
          const T* gyplane =
              gy + (((static_cast<std::int64_t>(nn) * g.to + tt) * g.ho + hh) * g.wo) * co;
          for (int ww = wlo; ww < whi; ++ww) {
            const T* __restrict xrow = xplane + (ww * s.w - g.pw + cc) * ci;
            const T* __restrict gyrow = gyplane + static_cast<std::int64_t>(ww) * co;
            for (int ic = 0; ic < ci; ++ic) {
              const T xv = xrow[ic];
              T* __restrict gkrow = gkslab + static_cast<std::int64_t>(ic) * co;
              for (int c = 0; c < co; ++c) gkrow[c] += xv * gyrow[c];
            }
          }
        }
      }
  }
}

}  // namespace detail

template <typename T>
Var conv3d(Tape<T>& tape, Var x, Var kernel, Var bias, Stride3 stride, Padding padding) {
  const auto& vx = tape.value(x);
  const auto& vk = tape.value(kernel);
  if (vx.rank() != 5) throw std::invalid_argument("conv3d input must be rank 5 [N,T,H,W,C]");
  if (vk.rank() != 5) throw std::invalid_argument("conv3d kernel must be rank 5 [kT,kH,kW,Ci,Co]");
  const int n = vx.dim(0), ti = vx.dim(1), hi = vx.dim(2), wi = vx.dim(3), ci = vx.dim(4);
  const int kt = vk.dim(0), kh = vk.dim(1), kw = vk.dim(2), co = vk.dim(4);
  if (vk.dim(3) != ci)
    throw std::invalid_argument("conv3d channel mismatch: input C=" + std::to_string(ci) +
                                ", kernel Ci=" + std::to_string(vk.dim(3)));
  const auto& vb = tape.value(bias);
  if (vb.rank() != 1 || vb.dim(0) != co) throw std::invalid_argument("conv3d bias must be [Co]");
  const ConvGeom g = detail::conv_geometry(ti, hi, wi, kt, kh, kw, stride, padding);
  Tensor<T> out = Tensor<T>::uninit({n, g.to, g.ho, g.wo, co});
  detail::conv3d_forward_kernel(vx.data(), vk.data(), vb.data(), out.data(), n, ti, hi, wi, ci, kt,
                                kh, kw, co, stride, g);
  return tape.make(std::move(out), {x.id, kernel.id, bias.id},
                   [x, kernel, bias, n, ti, hi, wi, ci, kt, kh, kw, co, stride, g](Tape<T>& t,
                                                                                   int self) {
                     const auto& gy = t.grad(self);
                     if (t.requires_grad(x))
                       detail::conv3d_backward_input(gy.data(), t.value(kernel).data(),
                                                     t.grad(x).data(), n, ti, hi, wi, ci, kt, kh,
                                                     kw, co, stride, g);
                     if (t.requires_grad(kernel))
                       detail::conv3d_backward_kernelw(t.value(x).data(), gy.data(),
                                                       t.grad(kernel).data(), n, ti, hi, wi, ci,
                                                       kt, kh, kw, co, stride, g);
                     if (t.requires_grad(bias)) {
                       auto& gb = t.grad(bias);
                       const std::size_t pixels = gy.size() / static_cast<std::size_t>(co);
                       for (std::size_t p = 0; p < pixels; ++p) {
                         const T* row = gy.data() + p * static_cast<std::size_t>(co);
                         for (int c = 0; c < co; ++c) gb[static_cast<std::size_t>(c)] += row[c];
                       }
                     }
                   });
}

// ---------------------------------------------------------------------------
// pool3d: max or average over a [wT,wH,wW] window. Channel count unchanged.
// Average pooling with same padding divides by the count of in-bounds
// elements only.
// ---------------------------------------------------------------------------

enum class Pool { kMax, kAvg };

template <typename T>
Var pool3d(Tape<T>& tape, Var x, Pool kind, Stride3 window, Stride3 stride, Padding padding) {
  const auto& vx = tape.value(x);
  if (vx.rank() != 5) throw std::invalid_argument("pool3d input must be rank 5");
  if (window.t < 1 || window.h < 1 || window.w < 1)
    throw std::invalid_argument("pool3d: zero-size window");
  const int n = vx.dim(0), ti = vx.dim(1), hi = vx.dim(2), wi = vx.dim(3), c = vx.dim(4);
  const ConvGeom g =
      detail::conv_geometry(ti, hi, wi, window.t, window.h, window.w, stride, padding);
  Tensor<T> out({n, g.to, g.ho, g.wo, c});
  std::vector<std::size_t> argmax;
  if (kind == Pool::kMax) argmax.assign(out.size(), 0);

  const T* xd = vx.data();
  T* yd = out.data();
  for (int nn = 0; nn < n; ++nn)
    for (int tt = 0; tt < g.to; ++tt)
      for (int hh = 0; hh < g.ho; ++hh)
        for (int ww = 0; ww < g.wo; ++ww) {
          const std::size_t obase =
              (((static_cast<std::size_t>(nn) * g.to + tt) * g.ho + hh) * g.wo + ww) *
              static_cast<std::size_t>(c);
          int count = 0;
          bool first = true;
          for (int a = 0; a < window.t; ++a) {
            const int tin = tt * stride.t - g.pt + a;
            if (tin < 0 || tin >= ti) continue;
            for (int b = 0; b < window.h; ++b) {
              const int hin = hh * stride.h - g.ph + b;
              if (hin < 0 || hin >= hi) continue;
              for (int cc = 0; cc < window.w; ++cc) {
                const int win = ww * stride.w - g.pw + cc;
                if (win < 0 || win >= wi) continue;
                const std::size_t ibase =
                    (((static_cast<std::size_t>(nn) * ti + tin) * hi + hin) * wi + win) *
                    static_cast<std::size_t>(c);
                ++count;
                if (kind == Pool::kMax) {
                  for (int ch = 0; ch < c; ++ch) {
                    const T v = xd[ibase + static_cast<std::size_t>(ch)];
                    if (first || v > yd[obase + static_cast<std::size_t>(ch)]) {
                      yd[obase + static_cast<std::size_t>(ch)] = v;
                      argmax[obase + static_cast<std::size_t>(ch)] =
                          ibase + static_cast<std::size_t>(ch);
                    }
                  }
                } else {
                  for (int ch = 0; ch < c; ++ch)
                    yd[obase + static_cast<std::size_t>(ch)] +=
                        xd[ibase + static_cast<std::size_t>(ch)];
                }
                first = false;
              }
            }
          }
          if (kind == Pool::kAvg && count > 0) {
            const T inv = T(1) / static_cast<T>(count);
            for (int ch = 0; ch < c; ++ch) yd[obase + static_cast<std::size_t>(ch)] *= inv;
          }
        }

  if (kind == Pool::kMax) {
    return tape.make(std::move(out), {x.id}, [x, argmax = std::move(argmax)](Tape<T>& t, int self) {
      const auto& gy = t.grad(self);
      auto& gx = t.grad(x);
      for (std::size_t o = 0; o < gy.size(); ++o) gx[argmax[o]] += gy[o];
    });
  }
  return tape.make(std::move(out), {x.id},
                   [x, n, ti, hi, wi, c, window, stride, g](Tape<T>& t, int self) {
                     const auto& gy = t.grad(self);
                     auto& gx = t.grad(x);
                     for (int nn = 0; nn < n; ++nn)
                       for (int tt = 0; tt < g.to; ++tt)
                         for (int hh = 0; hh < g.ho; ++hh)
                           for (int ww = 0; ww < g.wo; ++ww) {
                             const std::size_t obase =
                                 (((static_cast<std::size_t>(nn) * g.to + tt) * g.ho + hh) * g.wo +
                                  ww) *
                                 static_cast<std::size_t>(c);
                             int count = 0;
                             for (int a = 0; a < window.t; ++a) {
                               const int tin = tt * stride.t - g.pt + a;
                               if (tin < 0 || tin >= ti) continue;
                               for (int b = 0; b < window.h; ++b) {
                                 const int hin = hh * stride.h - g.ph + b;
                                 if (hin < 0 || hin >= hi) continue;
                                 for (int cc = 0; cc < window.w; ++cc) {
                                   const int win = ww * stride.w - g.pw + cc;
                                   if (win >= 0 && win < wi) ++count;
                                 }
                               }
                             }
                             if (!count) continue;
                             const T inv = T(1) / static_cast<T>(count);
                             for (int a = 0; a < window.t; ++a) {
                               const int tin = tt * stride.t - g.pt + a;
                               if (tin < 0 || tin >= ti) continue;
                               for (int b = 0; b < window.h; ++b) {
                                 const int hin = hh * stride.h - g.ph + b;
                                 if (hin < 0 || hin >= hi) continue;
                                 for (int cc = 0; cc < window.w; ++cc) {
                                   const int win = ww * stride.w - g.pw + cc;
                                   if (win < 0 || win >= wi) continue;
                                   const std::size_t ibase =
                                       (((static_cast<std::size_t>(nn) * ti + tin) * hi + hin) *
                                            wi +
                                        win) *
                                       static_cast<std::size_t>(c);
                                   for (int ch = 0; ch < c; ++ch)
                                     gx[ibase + static_cast<std::size_t>(ch)] +=
                                         gy[obase + static_cast<std::size_t>(ch)] * inv;
                                 }
                               }
                             }
                           }
                   });
}

// ---------------------------------------------------------------------------
// Adaptive average pooling to an exact output grid. Bin i along an axis of
// size `in` covers [floor(i*in/out), ceil((i+1)*in/out)); bins may overlap
// when upsampling.
// ---------------------------------------------------------------------------

namespace detail {

inline int bin_lo(int i, int in, int out) {
  return static_cast<int>((static_cast<std::int64_t>(i) * in) / out);
}
inline int bin_hi(int i, int in, int out) {
  return static_cast<int>((static_cast<std::int64_t>(i + 1) * in + out - 1) / out);
}

}  // namespace detail

template <typename T>
Var adaptive_avg_pool3d(Tape<T>& tape, Var x, int ot, int oh, int ow) {
  const auto& vx = tape.value(x);
  if (vx.rank() != 5) throw std::invalid_argument("adaptive_avg_pool3d input must be rank 5");
  if (ot < 1 || oh < 1 || ow < 1) throw std::invalid_argument("adaptive pool target must be >= 1");
  const int n = vx.dim(0), ti = vx.dim(1), hi = vx.dim(2), wi = vx.dim(3), c = vx.dim(4);
  Tensor<T> out({n, ot, oh, ow, c});
  const T* xd = vx.data();
  T* yd = out.data();
  for (int nn = 0; nn < n; ++nn)
    for (int tt = 0; tt < ot; ++tt) {
      const int t0 = detail::bin_lo(tt, ti, ot), t1 = detail::bin_hi(tt, ti, ot);
      for (int hh = 0; hh < oh; ++hh) {
        const int h0 = detail::bin_lo(hh, hi, oh), h1 = detail::bin_hi(hh, hi, oh);
        for (int ww = 0; ww < ow; ++ww) {
          const int w0 = detail::bin_lo(ww, wi, ow), w1 = detail::bin_hi(ww, wi, ow);
          const std::size_t obase =
              (((static_cast<std::size_t>(nn) * ot + tt) * oh + hh) * ow + ww) *
              static_cast<std::size_t>(c);
          const T inv = T(1) / static_cast<T>((t1 - t0) * (h1 - h0) * (w1 - w0));
          for (int a = t0; a < t1; ++a)
            for (int b = h0; b < h1; ++b)
              for (int d = w0; d < w1; ++d) {
                const std::size_t ibase =
                    (((static_cast<std::size_t>(nn) * ti + a) * hi + b) * wi + d) *
                    static_cast<std::size_t>(c);
                for (int ch = 0; ch < c; ++ch)
                  yd[obase + static_cast<std::size_t>(ch)] +=
                      xd[ibase + static_cast<std::size_t>(ch)];
              }
          for (int ch = 0; ch < c; ++ch) yd[obase + static_cast<std::size_t>(ch)] *= inv;
        }
      }
    }
  return tape.make(std::move(out), {x.id}, [x, n, ti, hi, wi, c, ot, oh, ow](Tape<T>& t,
                                                                             int self) {
    const auto& gy = t.grad(self);
    auto& gx = t.grad(x);
    for (int nn = 0; nn < n; ++nn)
      for (int tt = 0; tt < ot; ++tt) {
        const int t0 = detail::bin_lo(tt, ti, ot), t1 = detail::bin_hi(tt, ti, ot);
        for (int hh = 0; hh < oh; ++hh) {
          const int h0 = detail::bin_lo(hh, hi, oh), h1 = detail::bin_hi(hh, hi, oh);
          for (int ww = 0; ww < ow; ++ww) {
            const int w0 = detail::bin_lo(ww, wi, ow), w1 = detail::bin_hi(ww, wi, ow);
            const std::size_t obase =
                (((static_cast<std::size_t>(nn) * ot + tt) * oh + hh) * ow + ww) *
                static_cast<std::size_t>(c);
            const T inv = T(1) / static_cast<T>((t1 - t0) * (h1 - h0) * (w1 - w0));
            for (int a = t0; a < t1; ++a)
              for (int b = h0; b < h1; ++b)
                for (int d = w0; d < w1; ++d) {
                  const std::size_t ibase =
                      (((static_cast<std::size_t>(nn) * ti + a) * hi + b) * wi + d) *
                      static_cast<std::size_t>(c);
                  for (int ch = 0; ch < c; ++ch)
                    gx[ibase + static_cast<std::size_t>(ch)] +=
                        gy[obase + static_cast<std::size_t>(ch)] * inv;
                }
          }
        }
      }
  });
}

}  // namespace stshare
