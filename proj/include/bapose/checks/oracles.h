#pragma once

// Independent reference computations used by the test suites, the
// acceptance binary and the `selftest` command. Nothing here calls the
// optimized kernels it is used to check.

#include <array>
#include <span>
#include <vector>

#include "bapose/dwasp.h"
#include "bapose/metrics.h"
#include "bapose/ops.h"
#include "bapose/random.h"
#include "bapose/tensor.h"
#include "bapose/train.h"

namespace bapose::oracle {

// Direct seven-loop cross-correlation in double precision.
Tensor64 naive_conv2d(const Tensor64& x, const Tensor64& w,
                      std::span<const double> bias, const ConvSpec& spec);

// Tensor filled with N(0, 1) values.
template <typename T>
BasicTensor<T> random_tensor(const Shape& s, Rng& rng, double scale = 1.0) {
  BasicTensor<T> t(s);
  for (T& v : t.values()) v = static_cast<T>(rng.normal() * scale);
  return t;
}

// Adaptive convolution evaluated tap by tap with its own bilinear lookup.
Tensor64 naive_adaptive_conv(const Tensor64& x, const Tensor64& w,
                             std::span<const double> bias,
                             const Tensor64& offsets);

// The waterfall and low-level fusion stages written out as one straight
// sequence of naive convolutions, means and broadcasts.
Tensor64 straight_waterfall(const Tensor64& g0, const DWaspWeights<double>& w,
                            const DWaspConfig& cfg);
Tensor64 straight_low_level(const Tensor64& low_level,
                            const Tensor64& waterfall,
                            const DWaspWeights<double>& w);

// The whole evaluator recomputed from scratch: per-threshold greedy matching
// over ground truths ordered non-ignored first, pooled detections, and the
// interpolated precision at each recall point taken as a maximum over every
// later operating point. Same tie rules as bapose::evaluate.
EvalResult brute_force_evaluate(const std::vector<ImageEval>& images,
                                const EvalSettings& settings);

// Image point moved by the augmentation parameters step by step: shift the
// centre to the origin, rotate, scale, shift back, translate.
std::array<double, 2> transform_point(const AffineParams& p, int width,
                                      int height, double x, double y);

// sum_i r_i * y_i: a scalar probe whose gradient w.r.t. y is r.
double dot(const Tensor64& r, const Tensor64& y);

}  // namespace bapose::oracle
