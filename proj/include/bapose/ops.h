#pragma once

#include <functional>
#include <span>
#include <vector>

#include "bapose/tensor.h"

namespace bapose {

// Geometry of a 2-D cross-correlation. Padding is zero padding applied on
// every side; the effective kernel extent is (k - 1) * dilation + 1.
struct ConvSpec {
  int kh = 3;
  int kw = 3;
  int stride = 1;
  int pad = 0;
  int dilation = 1;

  int extent_h() const { return (kh - 1) * dilation + 1; }
  int extent_w() const { return (kw - 1) * dilation + 1; }
  int out_h(int in_h) const;
  int out_w(int in_w) const;

  static ConvSpec pointwise() { return {1, 1, 1, 0, 1}; }
  // 3x3, stride 1, padding equal to the dilation: keeps extents.
  static ConvSpec same3x3(int dilation) { return {3, 3, 1, dilation, dilation}; }
};

// Cross-correlation of x (N,Cin,H,W) with w (Cout,Cin,kh,kw). bias is empty
// or holds Cout values.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& w,
                      std::span<const T> bias, const ConvSpec& spec);

template <typename T>
struct ConvGrads {
  BasicTensor<T> dx;
  BasicTensor<T> dw;
  std::vector<T> db;
};

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& x, const BasicTensor<T>& w,
                             const ConvSpec& spec, const BasicTensor<T>& dy);

// Mean over H*W per (n, c); output is (N,C,1,1).
template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> global_avg_pool_backward(const Shape& in_shape,
                                        const BasicTensor<T>& dy);

// Half-pixel (align_corners = false) bilinear resize with edge clamping.
template <typename T>
BasicTensor<T> bilinear_resize(const BasicTensor<T>& x, int out_h, int out_w);
template <typename T>
BasicTensor<T> bilinear_resize_backward(const Shape& in_shape,
                                        const BasicTensor<T>& dy);

// A fractional position inside plane (n, c). row/col are in pixel units with
// integer values at pixel centres.
struct SamplePoint {
  int n = 0;
  int c = 0;
  double row = 0;
  double col = 0;
};

// Bilinear interpolation from the four lattice neighbours; neighbours outside
// the plane read as zero.
template <typename T>
std::vector<T> bilinear_sample(const BasicTensor<T>& x,
                               std::span<const SamplePoint> points);

template <typename T>
struct SampleGrads {
  BasicTensor<T> dx;
  std::vector<T> drow;
  std::vector<T> dcol;
};

template <typename T>
SampleGrads<T> bilinear_sample_backward(const BasicTensor<T>& x,
                                        std::span<const SamplePoint> points,
                                        std::span<const T> dvalues);

// Single-plane kernel shared by bilinear_sample and adaptive convolution.
// Writes the value and, when requested, d value / d row and d value / d col.
template <typename T>
T sample_plane(const T* plane, int h, int w, T row, T col, T* d_row = nullptr,
               T* d_col = nullptr);
// Scatters g into the (up to four) neighbours used by sample_plane.
template <typename T>
void sample_plane_scatter(T* dplane, int h, int w, T row, T col, T g);

// Channel concatenation in argument order. Empty (C == 0) parts are skipped.
template <typename T>
BasicTensor<T> concat_channels(std::span<const BasicTensor<T>> parts);
template <typename T>
BasicTensor<T> concat_channels(std::initializer_list<const BasicTensor<T>*> parts);

// Channels [begin, begin + count) of x.
template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T>& x, int begin, int count);

// Splits dy along channels into pieces of the given widths (concat backward).
template <typename T>
std::vector<BasicTensor<T>> split_channels(const BasicTensor<T>& dy,
                                           std::span<const int> widths);

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
void add_inplace(BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T s);

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x);
// Gradient through ReLU given the forward output y.
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& y, const BasicTensor<T>& dy);

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x);
// Gradient through the sigmoid given the forward output y.
template <typename T>
BasicTensor<T> sigmoid_backward(const BasicTensor<T>& y,
                                const BasicTensor<T>& dy);

// Central differences (f(x + h e_j) - f(x - h e_j)) / 2h for every coordinate.
Tensor64 numeric_gradient(const std::function<double(const Tensor64&)>& f,
                          const Tensor64& x, double h);

}  // namespace bapose
