#include "bapose/adaptive_conv.h"

#include <sstream>
#include <vector>

namespace bapose {
namespace {

void check_adaptive_shapes(const Shape& x, const Shape& w, std::size_t bias_len,
                           const Shape& off) {
  std::ostringstream os;
  if (w.c != x.c || w.h != 3 || w.w != 3) {
    os << "adaptive_conv: weight " << w.str() << " incompatible with input "
       << x.str() << " (expected (Cout," << x.c << ",3,3))";
  } else if (bias_len != 0 && bias_len != static_cast<std::size_t>(w.n)) {
    os << "adaptive_conv: bias has " << bias_len << " values for " << w.n
       << " output channels";
  } else if (off.c != kOffsetChannels) {
    os << "adaptive_conv: offsets need " << kOffsetChannels
       << " channels, got " << off.c;
  } else if (off.n != x.n || off.h != x.h || off.w != x.w) {
    os << "adaptive_conv: offsets " << off.str()
       << " do not cover input " << x.str();
  }
  if (!os.str().empty()) throw ShapeError(os.str());
}

// Samples every (channel, tap) of batch item n into cols[(ci*9 + tap)*HW + p].
// When derivative buffers are given they receive d sample / d row and
// d sample / d col.
template <typename T>
void gather(const BasicTensor<T>& x, const BasicTensor<T>& offsets, int n,
            std::vector<T>& cols, std::vector<T>* drow, std::vector<T>* dcol) {
  const int h = x.h(), w = x.w(), cin = x.c();
  const std::size_t hw = x.shape().plane();
  cols.assign(static_cast<std::size_t>(cin) * kAdaptiveTaps * hw, T(0));
  if (drow) drow->assign(cols.size(), T(0));
  if (dcol) dcol->assign(cols.size(), T(0));
  for (int tap = 0; tap < kAdaptiveTaps; ++tap) {
    const T* orow = offsets.plane(n, 2 * tap).data();
    const T* ocol = offsets.plane(n, 2 * tap + 1).data();
    for (int ci = 0; ci < cin; ++ci) {
      const T* plane = x.plane(n, ci).data();
      const std::size_t base =
          (static_cast<std::size_t>(ci) * kAdaptiveTaps + tap) * hw;
      for (int y = 0; y < h; ++y) {
        for (int xx = 0; xx < w; ++xx) {
          const std::size_t p = static_cast<std::size_t>(y) * w + xx;
          const T row = static_cast<T>(y) + orow[p];
          const T col = static_cast<T>(xx) + ocol[p];
          cols[base + p] = sample_plane(plane, h, w, row, col,
                                        drow ? &(*drow)[base + p] : nullptr,
                                        dcol ? &(*dcol)[base + p] : nullptr);
        }
      }
    }
  }
}

}  // namespace

template <typename T>
BasicTensor<T> adaptive_conv(const BasicTensor<T>& x, const BasicTensor<T>& w,
                             std::span<const T> bias,
                             const BasicTensor<T>& offsets) {
  check_adaptive_shapes(x.shape(), w.shape(), bias.size(), offsets.shape());
  const int cout = w.n();
  const std::size_t k = static_cast<std::size_t>(x.c()) * kAdaptiveTaps;
  const std::size_t hw = x.shape().plane();
  BasicTensor<T> y(x.n(), cout, x.h(), x.w());
  std::vector<T> cols;
  for (int n = 0; n < x.n(); ++n) {
    gather<T>(x, offsets, n, cols, nullptr, nullptr);
    for (int co = 0; co < cout; ++co) {
      T* out = y.plane(n, co).data();
      const T b = bias.empty() ? T(0) : bias[co];
      for (std::size_t p = 0; p < hw; ++p) out[p] = b;
      const T* wrow = w.data() + static_cast<std::size_t>(co) * k;
      for (std::size_t j = 0; j < k; ++j) {
        const T wv = wrow[j];
        const T* src = cols.data() + j * hw;
        for (std::size_t p = 0; p < hw; ++p) out[p] += wv * src[p];
      }
    }
  }
  return y;
}

template <typename T>
AdaptiveConvGrads<T> adaptive_conv_backward(const BasicTensor<T>& x,
                                            const BasicTensor<T>& w,
                                            const BasicTensor<T>& offsets,
                                            const BasicTensor<T>& dy) {
  check_adaptive_shapes(x.shape(), w.shape(), 0, offsets.shape());
  const int cout = w.n(), cin = x.c(), h = x.h(), wd = x.w();
  if (dy.shape() != Shape{x.n(), cout, h, wd}) {
    throw ShapeError("adaptive_conv_backward: upstream gradient " +
                     dy.shape().str());
  }
  const std::size_t k = static_cast<std::size_t>(cin) * kAdaptiveTaps;
  const std::size_t hw = x.shape().plane();
  AdaptiveConvGrads<T> g{BasicTensor<T>(x.shape()), BasicTensor<T>(w.shape()),
                         std::vector<T>(cout, T(0)),
                         BasicTensor<T>(offsets.shape())};
  std::vector<T> cols, drow, dcol, dcols;
  for (int n = 0; n < x.n(); ++n) {
    gather(x, offsets, n, cols, &drow, &dcol);
    dcols.assign(cols.size(), T(0));
    for (int co = 0; co < cout; ++co) {
      const T* gout = dy.plane(n, co).data();
      T acc = 0;
      for (std::size_t p = 0; p < hw; ++p) acc += gout[p];
      g.db[co] += acc;
      const T* wrow = w.data() + static_cast<std::size_t>(co) * k;
      T* dwrow = g.dw.data() + static_cast<std::size_t>(co) * k;
      for (std::size_t j = 0; j < k; ++j) {
        const T* src = cols.data() + j * hw;
        T* dsrc = dcols.data() + j * hw;
        const T wv = wrow[j];
        T wacc = 0;
        for (std::size_t p = 0; p < hw; ++p) {
          wacc += gout[p] * src[p];
          dsrc[p] += wv * gout[p];
        }
        dwrow[j] += wacc;
      }
    }
    for (int tap = 0; tap < kAdaptiveTaps; ++tap) {
      const T* orow = offsets.plane(n, 2 * tap).data();
      const T* ocol = offsets.plane(n, 2 * tap + 1).data();
      T* gorow = g.doffsets.plane(n, 2 * tap).data();
      T* gocol = g.doffsets.plane(n, 2 * tap + 1).data();
      for (int ci = 0; ci < cin; ++ci) {
        T* dplane = g.dx.plane(n, ci).data();
        const std::size_t base =
            (static_cast<std::size_t>(ci) * kAdaptiveTaps + tap) * hw;
        for (int y = 0; y < h; ++y) {
          for (int xx = 0; xx < wd; ++xx) {
            const std::size_t p = static_cast<std::size_t>(y) * wd + xx;
            const T gv = dcols[base + p];
            gorow[p] += gv * drow[base + p];
            gocol[p] += gv * dcol[base + p];
            sample_plane_scatter(dplane, h, wd, static_cast<T>(y) + orow[p],
                                 static_cast<T>(xx) + ocol[p], gv);
          }
        }
      }
    }
  }
  return g;
}

template <typename T>
BasicTensor<T> canonical_offsets(int n, int h, int w) {
  BasicTensor<T> off(n, kOffsetChannels, h, w);
  for (int b = 0; b < n; ++b) {
    for (int tap = 0; tap < kAdaptiveTaps; ++tap) {
      for (T& v : off.plane(b, 2 * tap)) v = static_cast<T>(tap_row(tap));
      for (T& v : off.plane(b, 2 * tap + 1)) v = static_cast<T>(tap_col(tap));
    }
  }
  return off;
}

template <typename T>
BasicTensor<T> affine_to_offsets(const BasicTensor<T>& affine) {
  if (affine.c() != kAffineParams) {
    throw ShapeError("affine_to_offsets: expected 6 channels, got " +
                     affine.shape().str());
  }
  BasicTensor<T> off(affine.n(), kOffsetChannels, affine.h(), affine.w());
  const std::size_t hw = affine.shape().plane();
  for (int n = 0; n < affine.n(); ++n) {
    const T* a_rr = affine.plane(n, 0).data();
    const T* a_rc = affine.plane(n, 1).data();
    const T* a_cr = affine.plane(n, 2).data();
    const T* a_cc = affine.plane(n, 3).data();
    const T* t_r = affine.plane(n, 4).data();
    const T* t_c = affine.plane(n, 5).data();
    for (int tap = 0; tap < kAdaptiveTaps; ++tap) {
      const T pr = static_cast<T>(tap_row(tap));
      const T pc = static_cast<T>(tap_col(tap));
      T* gr = off.plane(n, 2 * tap).data();
      T* gc = off.plane(n, 2 * tap + 1).data();
      for (std::size_t p = 0; p < hw; ++p) {
        gr[p] = a_rr[p] * pr + a_rc[p] * pc + t_r[p];
        gc[p] = a_cr[p] * pr + a_cc[p] * pc + t_c[p];
      }
    }
  }
  return off;
}

template <typename T>
BasicTensor<T> affine_to_offsets_backward(const BasicTensor<T>& doffsets) {
  if (doffsets.c() != kOffsetChannels) {
    throw ShapeError("affine_to_offsets_backward: expected 18 channels, got " +
                     doffsets.shape().str());
  }
  BasicTensor<T> da(doffsets.n(), kAffineParams, doffsets.h(), doffsets.w());
  const std::size_t hw = doffsets.shape().plane();
  for (int n = 0; n < doffsets.n(); ++n) {
    T* a_rr = da.plane(n, 0).data();
    T* a_rc = da.plane(n, 1).data();
    T* a_cr = da.plane(n, 2).data();
    T* a_cc = da.plane(n, 3).data();
    T* t_r = da.plane(n, 4).data();
    T* t_c = da.plane(n, 5).data();
    for (int tap = 0; tap < kAdaptiveTaps; ++tap) {
      const T pr = static_cast<T>(tap_row(tap));
      const T pc = static_cast<T>(tap_col(tap));
      const T* gr = doffsets.plane(n, 2 * tap).data();
      const T* gc = doffsets.plane(n, 2 * tap + 1).data();
      for (std::size_t p = 0; p < hw; ++p) {
        a_rr[p] += gr[p] * pr;
        a_rc[p] += gr[p] * pc;
        t_r[p] += gr[p];
        a_cr[p] += gc[p] * pr;
        a_cc[p] += gc[p] * pc;
        t_c[p] += gc[p];
      }
    }
  }
  return da;
}

template <typename T>
BasicTensor<T> predict_offsets(const BasicTensor<T>& features,
                               const ConvParams<T>& predictor) {
  return affine_to_offsets(
      conv_apply(predictor, features, ConvSpec::pointwise()));
}

template <typename T>
BasicTensor<T> predict_offsets_backward(const BasicTensor<T>& features,
                                        const ConvParams<T>& predictor,
                                        const BasicTensor<T>& doffsets,
                                        ConvParams<T>& grad) {
  return conv_apply_backward(predictor, features, ConvSpec::pointwise(),
                             affine_to_offsets_backward(doffsets), grad);
}

template <typename T>
ConvParams<T> identity_offset_predictor(int cin) {
  auto p = ConvParams<T>::zeros(kAffineParams, cin, 1, 1);
  p.b[0] = T(1);
  p.b[3] = T(1);
  return p;
}

#define BAPOSE_INSTANTIATE_ADAPTIVE(T)                                        \
  template BasicTensor<T> adaptive_conv(const BasicTensor<T>&,                \
                                        const BasicTensor<T>&,                \
                                        std::span<const T>,                   \
                                        const BasicTensor<T>&);               \
  template AdaptiveConvGrads<T> adaptive_conv_backward(                       \
      const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,    \
      const BasicTensor<T>&);                                                 \
  template BasicTensor<T> canonical_offsets(int, int, int);                   \
  template BasicTensor<T> affine_to_offsets(const BasicTensor<T>&);           \
  template BasicTensor<T> affine_to_offsets_backward(const BasicTensor<T>&);  \
  template BasicTensor<T> predict_offsets(const BasicTensor<T>&,              \
                                          const ConvParams<T>&);              \
  template BasicTensor<T> predict_offsets_backward(                           \
      const BasicTensor<T>&, const ConvParams<T>&, const BasicTensor<T>&,     \
      ConvParams<T>&);                                                        \
  template ConvParams<T> identity_offset_predictor(int);

BAPOSE_INSTANTIATE_ADAPTIVE(float)
BAPOSE_INSTANTIATE_ADAPTIVE(double)

#undef BAPOSE_INSTANTIATE_ADAPTIVE

}  // namespace bapose
