#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "stshare/detail/parallel.hpp"
#include "stshare/tape.hpp"
#include "stshare/tensor.hpp"

namespace stshare {

namespace detail {

// Binary ops accept equal shapes or a rank-1 right operand broadcast along
// the trailing (channel) axis.
template <typename T>
bool trailing_broadcast(const Tensor<T>& a, const Tensor<T>& b) {
  return b.rank() == 1 && a.rank() >= 1 && a.dim(a.rank() - 1) == b.dim(0);
}

template <typename T>
void check_binary_shapes(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (!a.same_shape(b) && !trailing_broadcast(a, b))
    throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

template <typename T>
Var add(Tape<T>& tape, Var a, Var b) {
  const auto& va = tape.value(a);
  const auto& vb = tape.value(b);
  detail::check_binary_shapes(va, vb, "add");
  Tensor<T> out = Tensor<T>::uninit(va.shape());
  if (va.same_shape(vb)) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] + vb[i];
  } else {
    const std::size_t c = vb.size();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] + vb[i % c];
  }
  return tape.make(std::move(out), {a.id, b.id}, [a, b](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(a)) {
      auto& ga = t.grad(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.requires_grad(b)) {
      auto& gb = t.grad(b);
      if (gb.size() == g.size()) {
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      } else {
        const std::size_t c = gb.size();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i % c] += g[i];
      }
    }
  });
}

template <typename T>
Var sub(Tape<T>& tape, Var a, Var b) {
  const auto& va = tape.value(a);
  const auto& vb = tape.value(b);
  detail::check_binary_shapes(va, vb, "sub");
  Tensor<T> out = Tensor<T>::uninit(va.shape());
  if (va.same_shape(vb)) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] - vb[i];
  } else {
    const std::size_t c = vb.size();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] - vb[i % c];
  }
  return tape.make(std::move(out), {a.id, b.id}, [a, b](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(a)) {
      auto& ga = t.grad(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.requires_grad(b)) {
      auto& gb = t.grad(b);
      if (gb.size() == g.size()) {
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      } else {
        const std::size_t c = gb.size();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i % c] -= g[i];
      }
    }
  });
}

template <typename T>
Var mul(Tape<T>& tape, Var a, Var b) {
  const auto& va = tape.value(a);
  const auto& vb = tape.value(b);
  detail::check_binary_shapes(va, vb, "mul");
  Tensor<T> out = Tensor<T>::uninit(va.shape());
  const bool bc = !va.same_shape(vb);
  const std::size_t c = vb.size();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] * (bc ? vb[i % c] : vb[i]);
  return tape.make(std::move(out), {a.id, b.id}, [a, b, bc, c](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    const auto& va = t.value(a);
    const auto& vb = t.value(b);
    if (t.requires_grad(a)) {
      auto& ga = t.grad(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (bc ? vb[i % c] : vb[i]);
    }
    if (t.requires_grad(b)) {
      auto& gb = t.grad(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[bc ? i % c : i] += g[i] * va[i];
    }
  });
}

template <typename T>
Var scale(Tape<T>& tape, Var a, T c) {
  const auto& va = tape.value(a);
  Tensor<T> out = Tensor<T>::uninit(va.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] * c;
  return tape.make(std::move(out), {a.id}, [a, c](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    auto& ga = t.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
  });
}

template <typename T>
Var relu(Tape<T>& tape, Var a) {
  const auto& va = tape.value(a);
  Tensor<T> out = Tensor<T>::uninit(va.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] > T(0) ? va[i] : T(0);
  return tape.make(std::move(out), {a.id}, [a](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    const auto& va = t.value(a);
    auto& ga = t.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += va[i] > T(0) ? g[i] : T(0);
  });
}

// leaky_relu(alpha)(x) = x if x > 0 else alpha * x
template <typename T>
Var leaky_relu(Tape<T>& tape, Var a, T alpha) {
  const auto& va = tape.value(a);
  Tensor<T> out = Tensor<T>::uninit(va.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] > T(0) ? va[i] : alpha * va[i];
  return tape.make(std::move(out), {a.id}, [a, alpha](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    const auto& va = t.value(a);
    auto& ga = t.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += (va[i] > T(0) ? T(1) : alpha) * g[i];
  });
}

template <typename T>
Var sigmoid(Tape<T>& tape, Var a) {
  const auto& va = tape.value(a);
  Tensor<T> out = Tensor<T>::uninit(va.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = T(1) / (T(1) + std::exp(-va[i]));
  return tape.make(std::move(out), {a.id}, [a](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    const auto& y = t.value(Var{self});
    auto& ga = t.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (T(1) - y[i]);
  });
}

template <typename T>
Var tanh_op(Tape<T>& tape, Var a) {
  const auto& va = tape.value(a);
  Tensor<T> out = Tensor<T>::uninit(va.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(va[i]);
  return tape.make(std::move(out), {a.id}, [a](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    const auto& y = t.value(Var{self});
    auto& ga = t.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (T(1) - y[i] * y[i]);
  });
}

// ---------------------------------------------------------------------------
// matmul: [.., m, k] x [.., k, n] -> [.., m, n], equal leading batch dims.
// Reduction over k is sequential and ascending for every output element, so
// results are bitwise deterministic for any thread count.
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
void matmul_kernel(const T* a, const T* b, T* c, std::int64_t batch, std::int64_t m, std::int64_t k,
                   std::int64_t n, bool accumulate) {
  const std::int64_t rows = batch * m;
#pragma omp parallel for schedule(static) if (parallel_enabled() && rows * n * k > 16384)
  for (std::int64_t r = 0; r < rows; ++r) {
    const std::int64_t bi = r / m;
    const std::int64_t i = r % m;
    const T* arow = a + (bi * m + i) * k;
    const T* bmat = b + bi * k * n;
    T* crow = c + (bi * m + i) * n;
    if (!accumulate)
      for (std::int64_t j = 0; j < n; ++j) crow[j] = T(0);
    for (std::int64_t kk = 0; kk < k; ++kk) {
      const T av = arow[kk];
      const T* brow = bmat + kk * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[bi] += a[bi]^T x b[bi] where a is [batch, m, k], b is [batch, m, n].
template <typename T>
void matmul_at_b_accum(const T* a, const T* b, T* c, std::int64_t batch, std::int64_t m,
                       std::int64_t k, std::int64_t n) {
  const std::int64_t rows = batch * k;
#pragma omp parallel for schedule(static) if (parallel_enabled() && rows * n * m > 16384)
  for (std::int64_t r = 0; r < rows; ++r) {
    const std::int64_t bi = r / k;
    const std::int64_t kk = r % k;
    const T* amat = a + bi * m * k;
    const T* bmat = b + bi * m * n;
    T* crow = c + (bi * k + kk) * n;
    for (std::int64_t i = 0; i < m; ++i) {
      const T av = amat[i * k + kk];
      const T* brow = bmat + i * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[bi] += a[bi] x b[bi]^T where a is [batch, m, n], b is [batch, k, n].
template <typename T>
void matmul_a_bt_accum(const T* a, const T* b, T* c, std::int64_t batch, std::int64_t m,
                       std::int64_t k, std::int64_t n) {
  const std::int64_t rows = batch * m;
#pragma omp parallel for schedule(static) if (parallel_enabled() && rows * n * k > 16384)
  for (std::int64_t r = 0; r < rows; ++r) {
    const std::int64_t bi = r / m;
    const std::int64_t i = r % m;
    const T* arow = a + (bi * m + i) * n;
    const T* bmat = b + bi * k * n;
    T* crow = c + (bi * m + i) * k;
    for (std::int64_t kk = 0; kk < k; ++kk) {
      const T* brow = bmat + kk * n;
      T acc = T(0);
      for (std::int64_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
      crow[kk] += acc;
    }
  }
}

struct MatmulDims {
  std::int64_t batch, m, k, n;
  Shape out_shape;
};

template <typename T>
MatmulDims matmul_dims(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() < 2 || b.rank() < 2) throw std::invalid_argument("matmul needs rank >= 2");
  if (a.rank() != b.rank()) throw std::invalid_argument("matmul rank mismatch");
  const int r = a.rank();
  for (int i = 0; i + 2 < r; ++i)
    if (a.dim(i) != b.dim(i)) throw std::invalid_argument("matmul batch dim mismatch");
  if (a.dim(r - 1) != b.dim(r - 2))
    throw std::invalid_argument("matmul inner dim mismatch: " + shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  MatmulDims d;
  d.m = a.dim(r - 2);
  d.k = a.dim(r - 1);
  d.n = b.dim(r - 1);
  d.batch = 1;
  for (int i = 0; i + 2 < r; ++i) d.batch *= a.dim(i);
  d.out_shape = a.shape();
  d.out_shape[static_cast<std::size_t>(r - 1)] = static_cast<int>(d.n);
  return d;
}

}  // namespace detail

template <typename T>
Var matmul(Tape<T>& tape, Var a, Var b) {
  const auto& va = tape.value(a);
  const auto& vb = tape.value(b);
  const auto d = detail::matmul_dims(va, vb);
  Tensor<T> out = Tensor<T>::uninit(d.out_shape);
  detail::matmul_kernel(va.data(), vb.data(), out.data(), d.batch, d.m, d.k, d.n, false);
  return tape.make(std::move(out), {a.id, b.id}, [a, b, d](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    const auto& va = t.value(a);
    const auto& vb = t.value(b);
    if (t.requires_grad(a))
      detail::matmul_a_bt_accum(g.data(), vb.data(), t.grad(a).data(), d.batch, d.m, d.k, d.n);
    if (t.requires_grad(b))
      detail::matmul_at_b_accum(va.data(), g.data(), t.grad(b).data(), d.batch, d.m, d.k, d.n);
  });
}

// Swaps the last two axes; the batched-matmul companion.
template <typename T>
Var transpose_last2(Tape<T>& tape, Var a) {
  const auto& va = tape.value(a);
  if (va.rank() < 2) throw std::invalid_argument("transpose_last2 needs rank >= 2");
  const int r = va.rank();
  const std::size_t m = static_cast<std::size_t>(va.dim(r - 2));
  const std::size_t n = static_cast<std::size_t>(va.dim(r - 1));
  const std::size_t batch = va.size() / (m * n);
  Shape out_shape = va.shape();
  std::swap(out_shape[static_cast<std::size_t>(r - 2)], out_shape[static_cast<std::size_t>(r - 1)]);
  Tensor<T> out = Tensor<T>::uninit(out_shape);
  for (std::size_t b = 0; b < batch; ++b) {
    const T* src = va.data() + b * m * n;
    T* dst = out.data() + b * m * n;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) dst[j * m + i] = src[i * n + j];
  }
  return tape.make(std::move(out), {a.id}, [a, m, n, batch](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    auto& ga = t.grad(a);
    for (std::size_t b = 0; b < batch; ++b) {
      const T* src = g.data() + b * m * n;
      T* dst = ga.data() + b * m * n;
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < m; ++i) dst[i * n + j] += src[j * m + i];
    }
  });
}

// ---------------------------------------------------------------------------
// reshape / concat / slice
// ---------------------------------------------------------------------------

template <typename T>
Var reshape(Tape<T>& tape, Var a, Shape new_shape) {
  Tensor<T> out = tape.value(a).reshaped(std::move(new_shape));
  return tape.make(std::move(out), {a.id}, [a](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    auto& ga = t.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

namespace detail {

// Views a tensor as [outer, axis_dim, inner] around `axis`.
inline void axis_split(const Shape& s, int axis, std::size_t& outer, std::size_t& adim,
                       std::size_t& inner) {
  if (axis < 0 || axis >= static_cast<int>(s.size()))
    throw std::invalid_argument("axis out of range for shape " + shape_str(s));
  outer = 1;
  inner = 1;
  for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(s[static_cast<std::size_t>(i)]);
  adim = static_cast<std::size_t>(s[static_cast<std::size_t>(axis)]);
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i)
    inner *= static_cast<std::size_t>(s[i]);
}

}  // namespace detail

template <typename T>
Var concat(Tape<T>& tape, int axis, const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat of zero tensors");
  const Shape& s0 = tape.shape(parts[0]);
  Shape out_shape = s0;
  int total = 0;
  for (const Var& p : parts) {
    const Shape& s = tape.shape(p);
    if (static_cast<int>(s.size()) != static_cast<int>(s0.size()))
      throw std::invalid_argument("concat rank mismatch");
    for (int i = 0; i < static_cast<int>(s.size()); ++i)
      if (i != axis && s[static_cast<std::size_t>(i)] != s0[static_cast<std::size_t>(i)])
        throw std::invalid_argument("concat non-axis dim mismatch: " + shape_str(s) + " vs " +
                                    shape_str(s0));
    total += s[static_cast<std::size_t>(axis)];
  }
  out_shape[static_cast<std::size_t>(axis)] = total;

  std::size_t outer, adim_out, inner;
  detail::axis_split(out_shape, axis, outer, adim_out, inner);
  Tensor<T> out = Tensor<T>::uninit(out_shape);
  std::vector<std::size_t> offsets;  // element offset of each part along axis
  {
    std::size_t off = 0;
    for (const Var& p : parts) {
      offsets.push_back(off);
      const auto& v = tape.value(p);
      std::size_t o2, a2, i2;
      detail::axis_split(v.shape(), axis, o2, a2, i2);
      for (std::size_t ou = 0; ou < outer; ++ou)
        std::copy(v.data() + ou * a2 * inner, v.data() + (ou + 1) * a2 * inner,
                  out.data() + (ou * adim_out + off) * inner);
      off += a2;
    }
  }
  std::vector<int> ids;
  for (const Var& p : parts) ids.push_back(p.id);
  std::vector<Var> parts_copy = parts;
  return tape.make(std::move(out), ids,
                   [parts_copy, offsets, axis](Tape<T>& t, int self) {
                     const auto& g = t.grad(self);
                     std::size_t outer, adim_out, inner;
                     detail::axis_split(g.shape(), axis, outer, adim_out, inner);
                     for (std::size_t pi = 0; pi < parts_copy.size(); ++pi) {
                       Var p = parts_copy[pi];
                       if (!t.requires_grad(p)) continue;
                       auto& gp = t.grad(p);
                       std::size_t o2, a2, i2;
                       detail::axis_split(gp.shape(), axis, o2, a2, i2);
                       for (std::size_t ou = 0; ou < outer; ++ou) {
                         const T* src = g.data() + (ou * adim_out + offsets[pi]) * inner;
                         T* dst = gp.data() + ou * a2 * inner;
                         for (std::size_t i = 0; i < a2 * inner; ++i) dst[i] += src[i];
                       }
                     }
                   });
}

template <typename T>
Var concat(Tape<T>& tape, int axis, Var a, Var b) {
  return concat(tape, axis, std::vector<Var>{a, b});
}

// Half-open [lo, hi) range along `axis`. The gradient is a zero-padded
// scatter back into the source extent.
template <typename T>
Var slice(Tape<T>& tape, Var a, int axis, int lo, int hi) {
  const auto& va = tape.value(a);
  const Shape& s = va.shape();
  if (axis < 0 || axis >= va.rank()) throw std::invalid_argument("slice axis out of range");
  const int adim = s[static_cast<std::size_t>(axis)];
  if (lo < 0 || hi > adim || lo >= hi)
    throw std::invalid_argument("slice range [" + std::to_string(lo) + "," + std::to_string(hi) +
                                ") invalid for axis dim " + std::to_string(adim));
  Shape out_shape = s;
  out_shape[static_cast<std::size_t>(axis)] = hi - lo;
  std::size_t outer, ad, inner;
  detail::axis_split(s, axis, outer, ad, inner);
  Tensor<T> out = Tensor<T>::uninit(out_shape);
  const std::size_t span = static_cast<std::size_t>(hi - lo) * inner;
  for (std::size_t ou = 0; ou < outer; ++ou)
    std::copy(va.data() + (ou * ad + static_cast<std::size_t>(lo)) * inner,
              va.data() + (ou * ad + static_cast<std::size_t>(lo)) * inner + span,
              out.data() + ou * span);
  return tape.make(std::move(out), {a.id}, [a, axis, lo](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    auto& ga = t.grad(a);
    std::size_t outer, ad, inner;
    detail::axis_split(ga.shape(), axis, outer, ad, inner);
    std::size_t o2, a2, i2;
    detail::axis_split(g.shape(), axis, o2, a2, i2);
    for (std::size_t ou = 0; ou < outer; ++ou) {
      const T* src = g.data() + ou * a2 * inner;
      T* dst = ga.data() + (ou * ad + static_cast<std::size_t>(lo)) * inner;
      for (std::size_t i = 0; i < a2 * inner; ++i) dst[i] += src[i];
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

namespace detail {

inline void check_axes(const Shape& s, const std::vector<int>& axes) {
  if (axes.empty()) throw std::invalid_argument("reduce: empty axes list");
  std::vector<bool> seen(s.size(), false);
  for (int a : axes) {
    if (a < 0 || a >= static_cast<int>(s.size()))
      throw std::invalid_argument("reduce axis out of range");
    if (seen[static_cast<std::size_t>(a)]) throw std::invalid_argument("reduce axes not distinct");
    seen[static_cast<std::size_t>(a)] = true;
  }
}

// Maps every flat input index to (output index, and vice versa) via strides.
struct ReducePlan {
  Shape out_shape;           // reduced dims removed (scalar keeps rank 1)
  std::vector<std::size_t> out_index_of_in;  // flat input -> flat output
  std::size_t out_numel = 1;
  std::size_t group = 1;  // number of inputs per output
};

inline ReducePlan make_reduce_plan(const Shape& s, const std::vector<int>& axes) {
  check_axes(s, axes);
  std::vector<bool> reduced(s.size(), false);
  for (int a : axes) reduced[static_cast<std::size_t>(a)] = true;
  ReducePlan plan;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (!reduced[i]) plan.out_shape.push_back(s[i]);
  if (plan.out_shape.empty()) plan.out_shape = {1};
  plan.out_numel = shape_numel(plan.out_shape);
  plan.group = shape_numel(s) / plan.out_numel;

  const auto in_strides = row_major_strides(s);
  Shape kept = plan.out_shape;
  std::vector<std::size_t> kept_strides = row_major_strides(kept);
  plan.out_index_of_in.resize(shape_numel(s));
  const std::size_t total = shape_numel(s);
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rem = flat, out = 0, ki = 0;
    for (std::size_t d = 0; d < s.size(); ++d) {
      const std::size_t idx = rem / in_strides[d];
      rem %= in_strides[d];
      if (!reduced[d]) {
        if (ki < kept_strides.size()) out += idx * kept_strides[ki];
        ++ki;
      }
    }
    plan.out_index_of_in[flat] = out;
  }
  return plan;
}

}  // namespace detail

enum class Reduce { kSum, kMean, kMax };

template <typename T>
Var reduce(Tape<T>& tape, Reduce kind, Var a, const std::vector<int>& axes) {
  const auto& va = tape.value(a);
  auto plan = detail::make_reduce_plan(va.shape(), axes);
  Tensor<T> out(plan.out_shape);
  std::vector<std::size_t> argmax;
  if (kind == Reduce::kMax) {
    argmax.assign(plan.out_numel, 0);
    std::vector<bool> init(plan.out_numel, false);
    for (std::size_t i = 0; i < va.size(); ++i) {
      const std::size_t o = plan.out_index_of_in[i];
      if (!init[o] || va[i] > out[o]) {
        out[o] = va[i];
        argmax[o] = i;
        init[o] = true;
      }
    }
  } else {
    for (std::size_t i = 0; i < va.size(); ++i) out[plan.out_index_of_in[i]] += va[i];
    if (kind == Reduce::kMean) {
      const T inv = T(1) / static_cast<T>(plan.group);
      for (std::size_t o = 0; o < out.size(); ++o) out[o] *= inv;
    }
  }
  auto out_index_of_in = std::move(plan.out_index_of_in);
  const T inv_group = T(1) / static_cast<T>(plan.group);
  return tape.make(
      std::move(out), {a.id},
      [a, kind, argmax = std::move(argmax), out_index_of_in = std::move(out_index_of_in),
       inv_group](Tape<T>& t, int self) {
        const auto& g = t.grad(self);
        auto& ga = t.grad(a);
        switch (kind) {
          case Reduce::kSum:
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[out_index_of_in[i]];
            break;
          case Reduce::kMean:
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[out_index_of_in[i]] * inv_group;
            break;
          case Reduce::kMax:
            // Routes each output gradient to the recorded argmax element.
            for (std::size_t o = 0; o < g.size(); ++o) ga[argmax[o]] += g[o];
            break;
        }
      });
}

template <typename T>
Var reduce_sum_all(Tape<T>& tape, Var a) {
  std::vector<int> axes(static_cast<std::size_t>(tape.value(a).rank()));
  for (std::size_t i = 0; i < axes.size(); ++i) axes[i] = static_cast<int>(i);
  return reduce(tape, Reduce::kSum, a, axes);
}

// ---------------------------------------------------------------------------
// softmax over the last axis, with mandatory max-subtraction stabilization.
// ---------------------------------------------------------------------------

template <typename T>
Var softmax(Tape<T>& tape, Var a) {
  const auto& va = tape.value(a);
  const int r = va.rank();
  const std::size_t c = static_cast<std::size_t>(va.dim(r - 1));
  const std::size_t rows = va.size() / c;
  Tensor<T> out = Tensor<T>::uninit(va.shape());
  for (std::size_t row = 0; row < rows; ++row) {
    const T* x = va.data() + row * c;
    T* y = out.data() + row * c;
    T mx = x[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, x[j]);
    T sum = T(0);
    for (std::size_t j = 0; j < c; ++j) {
      y[j] = std::exp(x[j] - mx);
      sum += y[j];
    }
    const T inv = T(1) / sum;
    for (std::size_t j = 0; j < c; ++j) y[j] *= inv;
  }
  return tape.make(std::move(out), {a.id}, [a, c](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    const auto& y = t.value(Var{self});
    auto& ga = t.grad(a);
    const std::size_t rows = g.size() / c;
    for (std::size_t row = 0; row < rows; ++row) {
      const T* gr = g.data() + row * c;
      const T* yr = y.data() + row * c;
      T dot = T(0);
      for (std::size_t j = 0; j < c; ++j) dot += gr[j] * yr[j];
      T* gar = ga.data() + row * c;
      for (std::size_t j = 0; j < c; ++j) gar[j] += yr[j] * (gr[j] - dot);
    }
  });
}

}  // namespace stshare
