#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "bapose/adaptive_conv.h"
#include "bapose/checks/oracles.h"

using namespace bapose;

namespace {

// Affine parameters (a_rr, a_rc, a_cr, a_cc, t_r, t_c) at every pixel.
Tensor64 uniform_affine(int h, int w, std::array<double, 6> a) {
  Tensor64 t(1, kAffineParams, h, w);
  for (int c = 0; c < kAffineParams; ++c) {
    for (double& v : t.plane(0, c)) v = a[c];
  }
  return t;
}

Tensor64 one_hot(int h, int w, int y, int x) {
  Tensor64 t(1, 1, h, w);
  t(0, 0, y, x) = 1.0;
  return t;
}

}  // namespace

TEST_CASE("tap layout") {
  CHECK(tap_row(0) == -1);
  CHECK(tap_col(0) == -1);
  CHECK(tap_row(4) == 0);
  CHECK(tap_col(4) == 0);
  CHECK(tap_row(5) == 0);
  CHECK(tap_col(5) == 1);
  CHECK(tap_row(8) == 1);
  CHECK(tap_col(8) == 1);
}

TEST_CASE("canonical offsets reduce adaptive conv to a 3x3 convolution") {
  Rng rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor64 x = oracle::random_tensor<double>({2, 3, 7, 6}, rng);
    const Tensor64 w = oracle::random_tensor<double>({4, 3, 3, 3}, rng);
    const std::vector<double> b{0.1, -0.2, 0.3, 0.0};
    const Tensor64 y =
        adaptive_conv(x, w, std::span<const double>(b), canonical_offsets<double>(2, 7, 6));
    const Tensor64 ref = conv2d(x, w, std::span<const double>(b), ConvSpec::same3x3(1));
    CHECK(norm_rel_error(y, ref) <= 1e-12);

    const Tensor xf = tensor_cast<float>(x), wf = tensor_cast<float>(w);
    const std::vector<float> bf(b.begin(), b.end());
    const Tensor yf = adaptive_conv(xf, wf, std::span<const float>(bf),
                                    canonical_offsets<float>(2, 7, 6));
    CHECK(max_rel_error(yf, ref) <= 1e-6);
  }
}

TEST_CASE("adaptive conv matches the tap-by-tap oracle at fractional offsets") {
  Rng rng(22);
  const Tensor64 x = oracle::random_tensor<double>({1, 2, 6, 5}, rng);
  const Tensor64 w = oracle::random_tensor<double>({3, 2, 3, 3}, rng);
  const Tensor64 off = oracle::random_tensor<double>({1, kOffsetChannels, 6, 5}, rng, 2.0);
  const std::vector<double> b{0.5, 0.0, -1.0};
  const Tensor64 y = adaptive_conv(x, w, std::span<const double>(b), off);
  const Tensor64 ref =
      oracle::naive_adaptive_conv(x, w, std::span<const double>(b), off);
  CHECK(norm_rel_error(y, ref) <= 1e-12);
}

TEST_CASE("shifting every offset one column equals convolving the shifted input") {
  Rng rng(23);
  const int h = 6, w = 7;
  const Tensor64 x = oracle::random_tensor<double>({1, 2, h, w}, rng);
  const Tensor64 k = oracle::random_tensor<double>({2, 2, 3, 3}, rng);
  Tensor64 off = canonical_offsets<double>(1, h, w);
  for (int i = 0; i < kAdaptiveTaps; ++i) {
    for (double& v : off.plane(0, 2 * i + 1)) v += 1.0;
  }
  // shifted(y, x) = x(y, x + 1), zero past the right edge
  Tensor64 shifted(x.shape());
  for (int c = 0; c < 2; ++c) {
    for (int r = 0; r < h; ++r) {
      for (int col = 0; col + 1 < w; ++col) shifted(0, c, r, col) = x(0, c, r, col + 1);
    }
  }
  const Tensor64 y = adaptive_conv(x, k, {}, off);
  const Tensor64 ref = conv2d(shifted, k, {}, ConvSpec::same3x3(1));
  // column 0 differs: its left tap reads x(., 0) directly but padding in ref
  double worst = 0;
  for (int o = 0; o < 2; ++o) {
    for (int r = 0; r < h; ++r) {
      for (int col = 1; col < w; ++col) {
        worst = std::max(worst, std::abs(y(0, o, r, col) - ref(0, o, r, col)));
      }
    }
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("identity predictor yields the canonical grid") {
  Rng rng(24);
  const Tensor64 feats = oracle::random_tensor<double>({1, 5, 4, 4}, rng);
  const auto pred = identity_offset_predictor<double>(5);
  CHECK(predict_offsets(feats, pred) == canonical_offsets<double>(1, 4, 4));
}

TEST_CASE("A = 2I samples a 5x5 footprint") {
  const int h = 9, w = 9;
  const Tensor64 off =
      affine_to_offsets(uniform_affine(h, w, {2, 0, 0, 2, 0, 0}));
  const Tensor64 k(1, 1, 3, 3, 1.0);
  // Probe each pixel with a one-hot input and record which pixels reach the
  // centre output.
  int reached = 0, rmin = h, rmax = -1, cmin = w, cmax = -1;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double v = adaptive_conv(one_hot(h, w, y, x), k, {}, off)(0, 0, 4, 4);
      if (v != 0.0) {
        ++reached;
        rmin = std::min(rmin, y);
        rmax = std::max(rmax, y);
        cmin = std::min(cmin, x);
        cmax = std::max(cmax, x);
      }
    }
  }
  CHECK(reached == 9);
  CHECK(rmax - rmin + 1 == 5);
  CHECK(cmax - cmin + 1 == 5);
  CHECK(rmin == 2);
  CHECK(cmin == 2);
}

TEST_CASE("A = 0 collapses every tap onto the centre pixel") {
  Rng rng(25);
  const Tensor64 x = oracle::random_tensor<double>({1, 3, 5, 5}, rng);
  const Tensor64 w = oracle::random_tensor<double>({2, 3, 3, 3}, rng);
  const Tensor64 off = affine_to_offsets(uniform_affine(5, 5, {0, 0, 0, 0, 0, 0}));
  Tensor64 summed(2, 3, 1, 1);
  for (int o = 0; o < 2; ++o) {
    for (int c = 0; c < 3; ++c) {
      for (int i = 0; i < 9; ++i) summed(o, c, 0, 0) += w(o, c, i / 3, i % 3);
    }
  }
  const Tensor64 y = adaptive_conv(x, w, {}, off);
  CHECK(norm_rel_error(y, conv2d(x, summed, {}, ConvSpec::pointwise())) <= 1e-12);
}

TEST_CASE("translation moves all taps together") {
  const Tensor64 off = affine_to_offsets(uniform_affine(3, 3, {1, 0, 0, 1, 0.5, -2}));
  for (int i = 0; i < kAdaptiveTaps; ++i) {
    CHECK(off(0, 2 * i, 1, 1) == doctest::Approx(tap_row(i) + 0.5));
    CHECK(off(0, 2 * i + 1, 1, 1) == doctest::Approx(tap_col(i) - 2.0));
  }
}

TEST_CASE("adaptive conv shape errors") {
  const Tensor x(1, 2, 4, 4), w(3, 2, 3, 3);
  CHECK_THROWS_AS(adaptive_conv(x, w, {}, Tensor(1, 17, 4, 4)), ShapeError);
  CHECK_THROWS_AS(adaptive_conv(x, w, {}, Tensor(1, 18, 4, 5)), ShapeError);
  CHECK_THROWS_AS(adaptive_conv(x, Tensor(3, 1, 3, 3), {}, canonical_offsets<float>(1, 4, 4)),
                  ShapeError);
}
