#pragma once

#include <span>

#include "bapose/layers.h"
#include "bapose/tensor.h"

namespace bapose {

// Number of sampling taps of an adaptive convolution and the channel count of
// its offset field (one (row, col) displacement per tap).
inline constexpr int kAdaptiveTaps = 9;
inline constexpr int kOffsetChannels = 2 * kAdaptiveTaps;
// Per-pixel affine parameters (a_rr, a_rc, a_cr, a_cc, t_r, t_c).
inline constexpr int kAffineParams = 6;

// Canonical grid position of tap i as (row, col) in {-1, 0, 1}^2, row-major.
inline constexpr int tap_row(int i) { return i / 3 - 1; }
inline constexpr int tap_col(int i) { return i % 3 - 1; }

// y(c) = b + sum_i w_i . x(c + g_i(c)) with x read by bilinear sampling (zero
// outside). w is (Cout, Cin, 3, 3); tap i uses w[:, :, i / 3, i % 3].
// offsets is (N, 18, H, W): channel 2i holds the row displacement of tap i,
// channel 2i + 1 the column displacement, measured from the output pixel.
template <typename T>
BasicTensor<T> adaptive_conv(const BasicTensor<T>& x, const BasicTensor<T>& w,
                             std::span<const T> bias,
                             const BasicTensor<T>& offsets);

template <typename T>
struct AdaptiveConvGrads {
  BasicTensor<T> dx;
  BasicTensor<T> dw;
  std::vector<T> db;
  BasicTensor<T> doffsets;
};

template <typename T>
AdaptiveConvGrads<T> adaptive_conv_backward(const BasicTensor<T>& x,
                                            const BasicTensor<T>& w,
                                            const BasicTensor<T>& offsets,
                                            const BasicTensor<T>& dy);

// Offsets realising the canonical 3x3 grid (adaptive_conv then equals a
// 3x3 convolution with padding 1).
template <typename T>
BasicTensor<T> canonical_offsets(int n, int h, int w);

// Maps per-pixel affine parameters (N, 6, H, W) to tap displacements
// g_i = A p_i + t, emitted as (N, 18, H, W).
template <typename T>
BasicTensor<T> affine_to_offsets(const BasicTensor<T>& affine);
template <typename T>
BasicTensor<T> affine_to_offsets_backward(const BasicTensor<T>& doffsets);

// A 1x1 convolution predicting the affine parameters, followed by
// affine_to_offsets. Bias (1,0,0,1,0,0) with zero weights yields the
// canonical grid.
template <typename T>
BasicTensor<T> predict_offsets(const BasicTensor<T>& features,
                               const ConvParams<T>& predictor);
// Accumulates predictor gradients and returns d loss / d features.
template <typename T>
BasicTensor<T> predict_offsets_backward(const BasicTensor<T>& features,
                                        const ConvParams<T>& predictor,
                                        const BasicTensor<T>& doffsets,
                                        ConvParams<T>& grad);

// Predictor parameters for the identity affine transform.
template <typename T>
ConvParams<T> identity_offset_predictor(int cin);

}  // namespace bapose
