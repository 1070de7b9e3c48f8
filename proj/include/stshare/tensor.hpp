#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "stshare/rng.hpp"

namespace stshare {

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) n *= static_cast<std::size_t>(d);
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

inline void check_shape_valid(const Shape& s) {
  if (s.empty()) throw std::invalid_argument("tensor shape must not be empty");
  for (int d : s)
    if (d < 1) throw std::invalid_argument("tensor dims must be positive, got " + shape_str(s));
}

namespace detail {

// Allocator whose default construction leaves trivial elements
// uninitialized, so buffers that are fully overwritten skip the zero-fill.
template <typename T, typename A = std::allocator<T>>
class default_init_allocator : public A {
  using traits = std::allocator_traits<A>;

 public:
  template <typename U>
  struct rebind {
    using other = default_init_allocator<U, typename traits::template rebind_alloc<U>>;
  };
  using A::A;

  template <typename U>
  void construct(U* ptr) noexcept(std::is_nothrow_default_constructible_v<U>) {
    ::new (static_cast<void*>(ptr)) U;
  }
  template <typename U, typename... Args>
  void construct(U* ptr, Args&&... args) {
    traits::construct(static_cast<A&>(*this), ptr, std::forward<Args>(args)...);
  }
};

}  // namespace detail

template <typename T>
using TensorStorage = std::vector<T, detail::default_init_allocator<T>>;

// Dense row-major rank-N tensor. Storage only; differentiation lives on the
// Tape. The element type is float for compute builds and double for
// verification builds.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    check_shape_valid(shape_);
    data_.assign(shape_numel(shape_), T(0));
  }

  Tensor(Shape shape, const std::vector<T>& data) : shape_(std::move(shape)) {
    check_shape_valid(shape_);
    if (data.size() != shape_numel(shape_))
      throw std::invalid_argument("data size does not match shape " + shape_str(shape_));
    data_.assign(data.begin(), data.end());
  }

  Tensor(Shape shape, TensorStorage<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape_valid(shape_);
    if (data_.size() != shape_numel(shape_))
      throw std::invalid_argument("data size does not match shape " + shape_str(shape_));
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  // Allocates without zero-filling; every element must be written before use.
  static Tensor uninit(Shape shape) {
    Tensor t;
    t.shape_ = std::move(shape);
    check_shape_valid(t.shape_);
    t.data_.resize(shape_numel(t.shape_));
    return t;
  }

  static Tensor ones(Shape shape) { return full(std::move(shape), T(1)); }

  static Tensor full(Shape shape, T v) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), v);
    return t;
  }

  static Tensor scalar(T v) { return Tensor({1}, {v}); }

  static Tensor uniform(Shape shape, T lo, T hi, Rng& rng) {
    Tensor t(std::move(shape));
    for (auto& x : t.data_) x = static_cast<T>(rng.uniform(lo, hi));
    return t;
  }

  // He initialization: std = sqrt(2 / fan_in).
  static Tensor he_normal(Shape shape, int fan_in, Rng& rng) {
    if (fan_in < 1) throw std::invalid_argument("he_normal requires fan_in >= 1");
    const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
    Tensor t(std::move(shape));
    for (auto& x : t.data_) x = static_cast<T>(std * rng.normal());
    return t;
  }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  std::size_t size() const { return data_.size(); }
  bool is_scalar() const { return data_.size() == 1; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  TensorStorage<T>& vec() { return data_; }
  const TensorStorage<T>& vec() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T item() const {
    if (!is_scalar()) throw std::logic_error("item() on non-scalar tensor " + shape_str(shape_));
    return data_[0];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  Tensor reshaped(Shape new_shape) const {
    check_shape_valid(new_shape);
    if (shape_numel(new_shape) != data_.size())
      throw std::invalid_argument("reshape " + shape_str(shape_) + " -> " + shape_str(new_shape) +
                                  " changes element count");
    Tensor t = *this;
    t.shape_ = std::move(new_shape);
    return t;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out = Tensor<U>::uninit(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

  bool all_finite() const {
    if constexpr (std::is_floating_point_v<T>) {
      for (const T& x : data_)
        if (!std::isfinite(x)) return false;
    }
    return true;
  }

 private:
  Shape shape_;
  TensorStorage<T> data_;
};

// Strides of a row-major layout, in elements.
inline std::vector<std::size_t> row_major_strides(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i)
    st[static_cast<std::size_t>(i)] =
        st[static_cast<std::size_t>(i) + 1] * static_cast<std::size_t>(s[static_cast<std::size_t>(i) + 1]);
  return st;
}

}  // namespace stshare
