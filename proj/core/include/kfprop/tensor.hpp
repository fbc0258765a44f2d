#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace kfprop {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

// Dense row-major tensor. The last axis is contiguous; image tensors use
// H x W x C layout so a pixel's channels sit next to each other.
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), data(shape_numel(shape), T(0)) {}
  Tensor(Shape s, T fill) : shape(std::move(s)), data(shape_numel(shape), fill) {}
  Tensor(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
    if (data.size() != shape_numel(shape))
      throw std::invalid_argument("tensor data size does not match shape " + shape_str(shape));
  }

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
  static Tensor full(Shape s, T v) { return Tensor(std::move(s), v); }

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }

  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }

  // Multi-index access; row-major, no wraparound.
  template <typename... Ix>
  T& at(Ix... ix) { return data[flat_index({static_cast<std::size_t>(ix)...})]; }
  template <typename... Ix>
  const T& at(Ix... ix) const { return data[flat_index({static_cast<std::size_t>(ix)...})]; }

  std::size_t flat_index(std::initializer_list<std::size_t> ix) const {
    assert(ix.size() == shape.size());
    std::size_t flat = 0;
    std::size_t axis = 0;
    for (std::size_t i : ix) {
      assert(i < shape[axis]);
      flat = flat * shape[axis] + i;
      ++axis;
    }
    return flat;
  }

  Tensor reshaped(Shape s) const {
    if (shape_numel(s) != numel())
      throw std::invalid_argument("reshape " + shape_str(shape) + " -> " + shape_str(s));
    Tensor out;
    out.shape = std::move(s);
    out.data = data;
    return out;
  }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  bool all_finite() const {
    for (T v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

template <typename T>
inline T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  assert(a.same_shape(b));
  T m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    T d = std::abs(a.data[i] - b.data[i]);
    if (d > m) m = d;
  }
  return m;
}

template <typename To, typename From>
inline Tensor<To> cast_tensor(const Tensor<From>& t) {
  Tensor<To> out(t.shape);
  for (std::size_t i = 0; i < t.numel(); ++i) out.data[i] = static_cast<To>(t.data[i]);
  return out;
}

}  // namespace kfprop
