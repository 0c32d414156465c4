#include "bapose/tensor.h"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace bapose {

std::string Shape::str() const {
  std::ostringstream os;
  os << "(" << n << "," << c << "," << h << "," << w << ")";
  return os.str();
}

namespace {

Shape checked(const Shape& s) {
  if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) {
    throw ShapeError("negative tensor extent " + s.str());
  }
  return s;
}

}  // namespace

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, T fill)
    : shape_(checked(shape)), data_(shape.size(), fill) {}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> values)
    : shape_(checked(shape)), data_(std::move(values)) {
  if (data_.size() != shape.size()) {
    std::ostringstream os;
    os << "tensor " << shape.str() << " needs " << shape.size()
       << " values, got " << data_.size();
    throw ShapeError(os.str());
  }
}

template <typename T>
void BasicTensor<T>::fill(T v) {
  std::fill(data_.begin(), data_.end(), v);
}

template <typename T>
bool BasicTensor<T>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](T v) { return std::isfinite(v); });
}

template class BasicTensor<float>;
template class BasicTensor<double>;

template <typename T, typename U>
double max_rel_error(const BasicTensor<T>& a, const BasicTensor<U>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("max_rel_error: " + a.shape().str() + " vs " +
                     b.shape().str());
  }
  double diff = 0.0;
  double ref = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(static_cast<double>(a[i]) -
                                   static_cast<double>(b[i])));
    ref = std::max(ref, std::abs(static_cast<double>(b[i])));
  }
  return ref > 0.0 ? diff / ref : diff;
}

double norm_rel_error(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("norm_rel_error: size mismatch");
  double d2 = 0.0, a2 = 0.0, b2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d2 += (a[i] - b[i]) * (a[i] - b[i]);
    a2 += a[i] * a[i];
    b2 += b[i] * b[i];
  }
  const double denom = std::sqrt(std::max(a2, b2));
  return denom > 0.0 ? std::sqrt(d2) / denom : 0.0;
}

template <typename T, typename U>
double norm_rel_error(const BasicTensor<T>& a, const BasicTensor<U>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("norm_rel_error: " + a.shape().str() + " vs " +
                     b.shape().str());
  }
  std::vector<double> da(a.values().begin(), a.values().end());
  std::vector<double> db(b.values().begin(), b.values().end());
  return norm_rel_error(std::span<const double>(da), std::span<const double>(db));
}

template double max_rel_error(const BasicTensor<float>&, const BasicTensor<float>&);
template double max_rel_error(const BasicTensor<float>&, const BasicTensor<double>&);
template double max_rel_error(const BasicTensor<double>&, const BasicTensor<double>&);
template double max_rel_error(const BasicTensor<double>&, const BasicTensor<float>&);
template double norm_rel_error(const BasicTensor<float>&, const BasicTensor<float>&);
template double norm_rel_error(const BasicTensor<float>&, const BasicTensor<double>&);
template double norm_rel_error(const BasicTensor<double>&, const BasicTensor<double>&);

}  // namespace bapose
