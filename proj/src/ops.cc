#include "bapose/ops.h"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace bapose {
namespace {

// Output indices o in [0, out) whose input coordinate o*stride - pad + tap
// lands inside [0, in). Returns an empty range as lo > hi.
struct Range {
  int lo;
  int hi;  // inclusive
};

Range valid_outputs(int in, int out, int stride, int pad, int tap) {
  // o*stride >= pad - tap  and  o*stride <= in - 1 + pad - tap
  const int lo_num = pad - tap;
  const int hi_num = in - 1 + pad - tap;
  int lo = lo_num <= 0 ? 0 : (lo_num + stride - 1) / stride;
  int hi = hi_num < 0 ? -1 : hi_num / stride;
  return {lo, std::min(hi, out - 1)};
}

void check_conv_shapes(const Shape& x, const Shape& w, std::size_t bias_len,
                       const ConvSpec& spec) {
  std::ostringstream os;
  if (spec.kh < 1 || spec.kw < 1 || spec.stride < 1 || spec.dilation < 1 ||
      spec.pad < 0) {
    os << "conv2d: invalid spec kh=" << spec.kh << " kw=" << spec.kw
       << " stride=" << spec.stride << " pad=" << spec.pad
       << " dilation=" << spec.dilation;
    throw ShapeError(os.str());
  }
  if (w.c != x.c || w.h != spec.kh || w.w != spec.kw) {
    os << "conv2d: weight " << w.str() << " incompatible with input "
       << x.str() << " and kernel " << spec.kh << "x" << spec.kw;
    throw ShapeError(os.str());
  }
  if (bias_len != 0 && bias_len != static_cast<std::size_t>(w.n)) {
    os << "conv2d: bias has " << bias_len << " values for " << w.n
       << " output channels";
    throw ShapeError(os.str());
  }
  if (spec.out_h(x.h) < 1 || spec.out_w(x.w) < 1) {
    os << "conv2d: zero-extent output for input " << x.str()
       << " with effective kernel " << spec.extent_h() << "x"
       << spec.extent_w() << ", pad " << spec.pad << ", stride "
       << spec.stride;
    throw ShapeError(os.str());
  }
}

}  // namespace

int ConvSpec::out_h(int in_h) const {
  const int span = in_h + 2 * pad - extent_h();
  return span < 0 ? 0 : span / stride + 1;
}

int ConvSpec::out_w(int in_w) const {
  const int span = in_w + 2 * pad - extent_w();
  return span < 0 ? 0 : span / stride + 1;
}

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& w,
                      std::span<const T> bias, const ConvSpec& spec) {
  check_conv_shapes(x.shape(), w.shape(), bias.size(), spec);
  const int cout = w.n(), cin = x.c();
  const int oh = spec.out_h(x.h()), ow = spec.out_w(x.w());
  BasicTensor<T> y(x.n(), cout, oh, ow);
  const int s = spec.stride;

  for (int n = 0; n < x.n(); ++n) {
    for (int co = 0; co < cout; ++co) {
      T* out = y.plane(n, co).data();
      if (!bias.empty()) std::fill(out, out + y.shape().plane(), bias[co]);
      for (int ci = 0; ci < cin; ++ci) {
        const T* in = x.plane(n, ci).data();
        for (int ky = 0; ky < spec.kh; ++ky) {
          const Range ry =
              valid_outputs(x.h(), oh, s, spec.pad, ky * spec.dilation);
          for (int kx = 0; kx < spec.kw; ++kx) {
            const Range rx =
                valid_outputs(x.w(), ow, s, spec.pad, kx * spec.dilation);
            const T wv = w(co, ci, ky, kx);
            for (int oy = ry.lo; oy <= ry.hi; ++oy) {
              const int iy = oy * s - spec.pad + ky * spec.dilation;
              const T* in_row = in + static_cast<std::size_t>(iy) * x.w();
              T* out_row = out + static_cast<std::size_t>(oy) * ow;
              const int off = kx * spec.dilation - spec.pad;
              if (s == 1) {
                for (int ox = rx.lo; ox <= rx.hi; ++ox) {
                  out_row[ox] += wv * in_row[ox + off];
                }
              } else {
                for (int ox = rx.lo; ox <= rx.hi; ++ox) {
                  out_row[ox] += wv * in_row[ox * s + off];
                }
              }
            }
          }
        }
      }
    }
  }
  return y;
}

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& x, const BasicTensor<T>& w,
                             const ConvSpec& spec, const BasicTensor<T>& dy) {
  check_conv_shapes(x.shape(), w.shape(), 0, spec);
  const int cout = w.n(), cin = x.c();
  const int oh = spec.out_h(x.h()), ow = spec.out_w(x.w());
  if (dy.shape() != Shape{x.n(), cout, oh, ow}) {
    throw ShapeError("conv2d_backward: upstream gradient " + dy.shape().str() +
                     " does not match output extents");
  }
  ConvGrads<T> g{BasicTensor<T>(x.shape()), BasicTensor<T>(w.shape()),
                 std::vector<T>(cout, T(0))};
  const int s = spec.stride;

  for (int n = 0; n < x.n(); ++n) {
    for (int co = 0; co < cout; ++co) {
      const T* gout = dy.plane(n, co).data();
      T acc = 0;
      for (std::size_t i = 0; i < dy.shape().plane(); ++i) acc += gout[i];
      g.db[co] += acc;
      for (int ci = 0; ci < cin; ++ci) {
        const T* in = x.plane(n, ci).data();
        T* gin = g.dx.plane(n, ci).data();
        for (int ky = 0; ky < spec.kh; ++ky) {
          const Range ry =
              valid_outputs(x.h(), oh, s, spec.pad, ky * spec.dilation);
          for (int kx = 0; kx < spec.kw; ++kx) {
            const Range rx =
                valid_outputs(x.w(), ow, s, spec.pad, kx * spec.dilation);
            const T wv = w(co, ci, ky, kx);
            const int off = kx * spec.dilation - spec.pad;
            T wacc = 0;
            for (int oy = ry.lo; oy <= ry.hi; ++oy) {
              const int iy = oy * s - spec.pad + ky * spec.dilation;
              const std::size_t in_base = static_cast<std::size_t>(iy) * x.w();
              const T* grow = gout + static_cast<std::size_t>(oy) * ow;
              for (int ox = rx.lo; ox <= rx.hi; ++ox) {
                const std::size_t ii = in_base + ox * s + off;
                wacc += grow[ox] * in[ii];
                gin[ii] += wv * grow[ox];
              }
            }
            g.dw(co, ci, ky, kx) += wacc;
          }
        }
      }
    }
  }
  return g;
}

template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& x) {
  if (x.h() < 1 || x.w() < 1) {
    throw ShapeError("global_avg_pool: empty spatial extent " +
                     x.shape().str());
  }
  BasicTensor<T> y(x.n(), x.c(), 1, 1);
  const T inv = T(1) / static_cast<T>(x.shape().plane());
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      T acc = 0;
      for (T v : x.plane(n, c)) acc += v;
      y(n, c, 0, 0) = acc * inv;
    }
  }
  return y;
}

template <typename T>
BasicTensor<T> global_avg_pool_backward(const Shape& in_shape,
                                        const BasicTensor<T>& dy) {
  if (dy.shape() != Shape{in_shape.n, in_shape.c, 1, 1}) {
    throw ShapeError("global_avg_pool_backward: " + dy.shape().str());
  }
  BasicTensor<T> dx(in_shape);
  const T inv = T(1) / static_cast<T>(in_shape.plane());
  for (int n = 0; n < in_shape.n; ++n) {
    for (int c = 0; c < in_shape.c; ++c) {
      const T g = dy(n, c, 0, 0) * inv;
      for (T& v : dx.plane(n, c)) v = g;
    }
  }
  return dx;
}

namespace {

// Source taps and weights for one output coordinate of a half-pixel resize.
struct ResizeTap {
  int i0;
  int i1;
  double frac;
};

std::vector<ResizeTap> resize_taps(int in, int out) {
  std::vector<ResizeTap> taps(out);
  const double scale = static_cast<double>(in) / out;
  for (int t = 0; t < out; ++t) {
    double src = (t + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const int i0 = static_cast<int>(std::floor(src));
    taps[t] = {i0, std::min(i0 + 1, in - 1), src - i0};
  }
  return taps;
}

}  // namespace

template <typename T>
BasicTensor<T> bilinear_resize(const BasicTensor<T>& x, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) {
    throw ShapeError("bilinear_resize: output extents must be positive");
  }
  if (out_h == x.h() && out_w == x.w()) return x;
  if (x.h() < 1 || x.w() < 1) {
    throw ShapeError("bilinear_resize: empty input " + x.shape().str());
  }
  const auto ty = resize_taps(x.h(), out_h);
  const auto tx = resize_taps(x.w(), out_w);
  BasicTensor<T> y(x.n(), x.c(), out_h, out_w);
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const T* in = x.plane(n, c).data();
      T* out = y.plane(n, c).data();
      for (int oy = 0; oy < out_h; ++oy) {
        const T fy = static_cast<T>(ty[oy].frac);
        const T* r0 = in + static_cast<std::size_t>(ty[oy].i0) * x.w();
        const T* r1 = in + static_cast<std::size_t>(ty[oy].i1) * x.w();
        for (int ox = 0; ox < out_w; ++ox) {
          const T fx = static_cast<T>(tx[ox].frac);
          const T top = r0[tx[ox].i0] * (T(1) - fx) + r0[tx[ox].i1] * fx;
          const T bot = r1[tx[ox].i0] * (T(1) - fx) + r1[tx[ox].i1] * fx;
          out[static_cast<std::size_t>(oy) * out_w + ox] =
              top * (T(1) - fy) + bot * fy;
        }
      }
    }
  }
  return y;
}

template <typename T>
BasicTensor<T> bilinear_resize_backward(const Shape& in_shape,
                                        const BasicTensor<T>& dy) {
  if (dy.n() != in_shape.n || dy.c() != in_shape.c) {
    throw ShapeError("bilinear_resize_backward: " + dy.shape().str() +
                     " vs input " + in_shape.str());
  }
  if (dy.h() == in_shape.h && dy.w() == in_shape.w) return dy;
  const auto ty = resize_taps(in_shape.h, dy.h());
  const auto tx = resize_taps(in_shape.w, dy.w());
  BasicTensor<T> dx(in_shape);
  for (int n = 0; n < in_shape.n; ++n) {
    for (int c = 0; c < in_shape.c; ++c) {
      const T* g = dy.plane(n, c).data();
      T* gin = dx.plane(n, c).data();
      for (int oy = 0; oy < dy.h(); ++oy) {
        const T fy = static_cast<T>(ty[oy].frac);
        T* r0 = gin + static_cast<std::size_t>(ty[oy].i0) * in_shape.w;
        T* r1 = gin + static_cast<std::size_t>(ty[oy].i1) * in_shape.w;
        for (int ox = 0; ox < dy.w(); ++ox) {
          const T fx = static_cast<T>(tx[ox].frac);
          const T v = g[static_cast<std::size_t>(oy) * dy.w() + ox];
          r0[tx[ox].i0] += v * (T(1) - fy) * (T(1) - fx);
          r0[tx[ox].i1] += v * (T(1) - fy) * fx;
          r1[tx[ox].i0] += v * fy * (T(1) - fx);
          r1[tx[ox].i1] += v * fy * fx;
        }
      }
    }
  }
  return dx;
}

template <typename T>
T sample_plane(const T* plane, int h, int w, T row, T col, T* d_row,
               T* d_col) {
  if (d_row) *d_row = 0;
  if (d_col) *d_col = 0;
  // Beyond one pixel outside the plane every neighbour is padding.
  if (!(row > T(-1)) || !(row < T(h)) || !(col > T(-1)) || !(col < T(w))) {
    return 0;
  }
  const T fy0 = std::floor(row), fx0 = std::floor(col);
  const int y0 = static_cast<int>(fy0), x0 = static_cast<int>(fx0);
  const T ly = row - fy0, lx = col - fx0;
  auto at = [&](int y, int x) -> T {
    return (y >= 0 && y < h && x >= 0 && x < w)
               ? plane[static_cast<std::size_t>(y) * w + x]
               : T(0);
  };
  const T v00 = at(y0, x0), v01 = at(y0, x0 + 1);
  const T v10 = at(y0 + 1, x0), v11 = at(y0 + 1, x0 + 1);
  if (d_row) *d_row = (T(1) - lx) * (v10 - v00) + lx * (v11 - v01);
  if (d_col) *d_col = (T(1) - ly) * (v01 - v00) + ly * (v11 - v10);
  // Zero-weight neighbours are skipped so lattice points reproduce the
  // stored value exactly.
  T v = (T(1) - ly) * (T(1) - lx) * v00;
  if (lx != T(0)) v += (T(1) - ly) * lx * v01;
  if (ly != T(0)) v += ly * (T(1) - lx) * v10;
  if (lx != T(0) && ly != T(0)) v += ly * lx * v11;
  return v;
}

template <typename T>
void sample_plane_scatter(T* dplane, int h, int w, T row, T col, T g) {
  if (!(row > T(-1)) || !(row < T(h)) || !(col > T(-1)) || !(col < T(w))) {
    return;
  }
  const T fy0 = std::floor(row), fx0 = std::floor(col);
  const int y0 = static_cast<int>(fy0), x0 = static_cast<int>(fx0);
  const T ly = row - fy0, lx = col - fx0;
  auto put = [&](int y, int x, T v) {
    if (y >= 0 && y < h && x >= 0 && x < w) {
      dplane[static_cast<std::size_t>(y) * w + x] += v;
    }
  };
  put(y0, x0, g * (T(1) - ly) * (T(1) - lx));
  put(y0, x0 + 1, g * (T(1) - ly) * lx);
  put(y0 + 1, x0, g * ly * (T(1) - lx));
  put(y0 + 1, x0 + 1, g * ly * lx);
}

namespace {

void check_point(const Shape& s, const SamplePoint& p) {
  if (p.n < 0 || p.n >= s.n || p.c < 0 || p.c >= s.c) {
    std::ostringstream os;
    os << "bilinear_sample: plane (" << p.n << "," << p.c
       << ") outside tensor " << s.str();
    throw ShapeError(os.str());
  }
}

}  // namespace

template <typename T>
std::vector<T> bilinear_sample(const BasicTensor<T>& x,
                               std::span<const SamplePoint> points) {
  std::vector<T> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    check_point(x.shape(), p);
    out[i] = sample_plane(x.plane(p.n, p.c).data(), x.h(), x.w(),
                          static_cast<T>(p.row), static_cast<T>(p.col));
  }
  return out;
}

template <typename T>
SampleGrads<T> bilinear_sample_backward(const BasicTensor<T>& x,
                                        std::span<const SamplePoint> points,
                                        std::span<const T> dvalues) {
  if (dvalues.size() != points.size()) {
    throw ShapeError("bilinear_sample_backward: gradient count mismatch");
  }
  SampleGrads<T> g{BasicTensor<T>(x.shape()),
                   std::vector<T>(points.size()),
                   std::vector<T>(points.size())};
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    check_point(x.shape(), p);
    const T row = static_cast<T>(p.row), col = static_cast<T>(p.col);
    T dr, dc;
    sample_plane(x.plane(p.n, p.c).data(), x.h(), x.w(), row, col, &dr, &dc);
    g.drow[i] = dvalues[i] * dr;
    g.dcol[i] = dvalues[i] * dc;
    sample_plane_scatter(g.dx.plane(p.n, p.c).data(), x.h(), x.w(), row, col,
                         dvalues[i]);
  }
  return g;
}

template <typename T>
BasicTensor<T> concat_channels(std::span<const BasicTensor<T>> parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  const Shape ref = parts.front().shape();
  int total = 0;
  for (const auto& p : parts) {
    if (p.n() != ref.n || p.h() != ref.h || p.w() != ref.w) {
      throw ShapeError("concat_channels: spatial mismatch " + p.shape().str() +
                       " vs " + ref.str());
    }
    total += p.c();
  }
  BasicTensor<T> y(ref.n, total, ref.h, ref.w);
  const std::size_t plane = ref.plane();
  for (int n = 0; n < ref.n; ++n) {
    int offset = 0;
    for (const auto& p : parts) {
      if (p.c() == 0) continue;
      const T* src = p.data() + static_cast<std::size_t>(n) * p.c() * plane;
      std::copy(src, src + p.c() * plane, y.plane(n, offset).data());
      offset += p.c();
    }
  }
  return y;
}

template <typename T>
BasicTensor<T> concat_channels(
    std::initializer_list<const BasicTensor<T>*> parts) {
  std::vector<BasicTensor<T>> copies;
  copies.reserve(parts.size());
  for (const auto* p : parts) copies.push_back(*p);
  return concat_channels<T>(std::span<const BasicTensor<T>>(copies));
}

template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T>& x, int begin, int count) {
  if (begin < 0 || count < 0 || begin + count > x.c()) {
    std::ostringstream os;
    os << "slice_channels: [" << begin << "," << begin + count
       << ") outside " << x.shape().str();
    throw ShapeError(os.str());
  }
  BasicTensor<T> y(x.n(), count, x.h(), x.w());
  const std::size_t plane = x.shape().plane();
  for (int n = 0; n < x.n(); ++n) {
    if (count == 0) continue;
    const T* src = x.plane(n, begin).data();
    std::copy(src, src + count * plane, y.plane(n, 0).data());
  }
  return y;
}

template <typename T>
std::vector<BasicTensor<T>> split_channels(const BasicTensor<T>& dy,
                                           std::span<const int> widths) {
  int total = 0;
  for (int w : widths) total += w;
  if (total != dy.c()) {
    throw ShapeError("split_channels: widths sum to " + std::to_string(total) +
                     ", tensor has " + std::to_string(dy.c()) + " channels");
  }
  std::vector<BasicTensor<T>> out;
  int offset = 0;
  for (int w : widths) {
    out.push_back(slice_channels(dy, offset, w));
    offset += w;
  }
  return out;
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  BasicTensor<T> y = a;
  add_inplace(y, b);
  return y;
}

template <typename T>
void add_inplace(BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add: " + a.shape().str() + " vs " + b.shape().str());
  }
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T s) {
  BasicTensor<T> y = a;
  for (T& v : y.values()) v *= s;
  return y;
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
  BasicTensor<T> y = x;
  for (T& v : y.values()) v = v > T(0) ? v : T(0);
  return y;
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& y,
                             const BasicTensor<T>& dy) {
  if (y.shape() != dy.shape()) throw ShapeError("relu_backward: shape mismatch");
  BasicTensor<T> dx(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) {
    dx[i] = y[i] > T(0) ? dy[i] : T(0);
  }
  return dx;
}

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x) {
  BasicTensor<T> y = x;
  for (T& v : y.values()) {
    // Split by sign so exp never overflows.
    if (v >= T(0)) {
      v = T(1) / (T(1) + std::exp(-v));
    } else {
      const T e = std::exp(v);
      v = e / (T(1) + e);
    }
  }
  return y;
}

template <typename T>
BasicTensor<T> sigmoid_backward(const BasicTensor<T>& y,
                                const BasicTensor<T>& dy) {
  if (y.shape() != dy.shape()) {
    throw ShapeError("sigmoid_backward: shape mismatch");
  }
  BasicTensor<T> dx(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) {
    dx[i] = dy[i] * y[i] * (T(1) - y[i]);
  }
  return dx;
}

Tensor64 numeric_gradient(const std::function<double(const Tensor64&)>& f,
                          const Tensor64& x, double h) {
  Tensor64 probe = x;
  Tensor64 grad(x.shape());
  for (std::size_t j = 0; j < x.size(); ++j) {
    probe[j] = x[j] + h;
    const double up = f(probe);
    probe[j] = x[j] - h;
    const double down = f(probe);
    probe[j] = x[j];
    grad[j] = (up - down) / (2.0 * h);
  }
  return grad;
}

#define BAPOSE_INSTANTIATE_OPS(T)                                              \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&, \
                                 std::span<const T>, const ConvSpec&);         \
  template ConvGrads<T> conv2d_backward(const BasicTensor<T>&,                 \
                                        const BasicTensor<T>&,                 \
                                        const ConvSpec&,                       \
                                        const BasicTensor<T>&);                \
  template BasicTensor<T> global_avg_pool(const BasicTensor<T>&);              \
  template BasicTensor<T> global_avg_pool_backward(const Shape&,               \
                                                   const BasicTensor<T>&);     \
  template BasicTensor<T> bilinear_resize(const BasicTensor<T>&, int, int);    \
  template BasicTensor<T> bilinear_resize_backward(const Shape&,               \
                                                   const BasicTensor<T>&);     \
  template std::vector<T> bilinear_sample(const BasicTensor<T>&,               \
                                          std::span<const SamplePoint>);       \
  template SampleGrads<T> bilinear_sample_backward(                            \
      const BasicTensor<T>&, std::span<const SamplePoint>, std::span<const T>); \
  template T sample_plane(const T*, int, int, T, T, T*, T*);                   \
  template void sample_plane_scatter(T*, int, int, T, T, T);                   \
  template BasicTensor<T> concat_channels(std::span<const BasicTensor<T>>);    \
  template BasicTensor<T> concat_channels(                                     \
      std::initializer_list<const BasicTensor<T>*>);                           \
  template BasicTensor<T> slice_channels(const BasicTensor<T>&, int, int);     \
  template std::vector<BasicTensor<T>> split_channels(const BasicTensor<T>&,   \
                                                      std::span<const int>);   \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);   \
  template void add_inplace(BasicTensor<T>&, const BasicTensor<T>&);           \
  template BasicTensor<T> scale(const BasicTensor<T>&, T);                     \
  template BasicTensor<T> relu(const BasicTensor<T>&);                         \
  template BasicTensor<T> relu_backward(const BasicTensor<T>&,                 \
                                        const BasicTensor<T>&);                \
  template BasicTensor<T> sigmoid(const BasicTensor<T>&);                      \
  template BasicTensor<T> sigmoid_backward(const BasicTensor<T>&,              \
                                           const BasicTensor<T>&);

BAPOSE_INSTANTIATE_OPS(float)
BAPOSE_INSTANTIATE_OPS(double)

#undef BAPOSE_INSTANTIATE_OPS

}  // namespace bapose
