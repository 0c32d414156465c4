#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "bapose/error.h"

namespace bapose {

// Extents of a dense (batch, channel, height, width) array.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

// Dense 4-axis array, row-major with width fastest. Values are owned; copies
// are deep.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T(0));
  BasicTensor(Shape shape, std::vector<T> values);
  BasicTensor(int n, int c, int h, int w, T fill = T(0))
      : BasicTensor(Shape{n, c, h, w}, fill) {}

  const Shape& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int c() const { return shape_.c; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  std::size_t index(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) *
               shape_.w +
           x;
  }
  T& operator()(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
  T operator()(int n, int c, int y, int x) const {
    return data_[index(n, c, y, x)];
  }
  T& operator[](std::size_t i) { return data_[i]; }
  T operator[](std::size_t i) const { return data_[i]; }

  // Contiguous (h*w) plane of one batch item and channel.
  std::span<T> plane(int n, int c) {
    return {data_.data() + index(n, c, 0, 0), shape_.plane()};
  }
  std::span<const T> plane(int n, int c) const {
    return {data_.data() + index(n, c, 0, 0), shape_.plane()};
  }

  void fill(T v);
  bool all_finite() const;

  bool operator==(const BasicTensor&) const = default;

 private:
  Shape shape_{};
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

template <typename U, typename T>
BasicTensor<U> tensor_cast(const BasicTensor<T>& t) {
  std::vector<U> out(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = static_cast<U>(t[i]);
  return BasicTensor<U>(t.shape(), std::move(out));
}

// max_i |a_i - b_i| / max_i |b_i|; b is the reference. Returns the absolute
// difference when the reference is identically zero.
template <typename T, typename U>
double max_rel_error(const BasicTensor<T>& a, const BasicTensor<U>& b);

// ||a - b||_2 / max(||a||_2, ||b||_2); 0 when both are zero.
template <typename T, typename U>
double norm_rel_error(const BasicTensor<T>& a, const BasicTensor<U>& b);

double norm_rel_error(std::span<const double> a, std::span<const double> b);

}  // namespace bapose
