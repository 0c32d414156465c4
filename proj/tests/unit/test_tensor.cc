#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bapose/checks/oracles.h"
#include "bapose/ops.h"

using namespace bapose;

namespace {

Tensor64 ones(Shape s) { return Tensor64(s, 1.0); }

}  // namespace

TEST_CASE("tensor rejects inconsistent construction") {
  CHECK_THROWS_AS(Tensor(Shape{1, 2, 2, 2}, std::vector<float>(7)), ShapeError);
  CHECK_THROWS_AS(Tensor(-1, 1, 1, 1), ShapeError);
  Tensor t(2, 3, 4, 5);
  CHECK(t.size() == 120);
  t(1, 2, 3, 4) = 7.f;
  CHECK(t[t.size() - 1] == 7.f);
}

TEST_CASE("conv2d identity 1x1 kernel") {
  Rng rng(1);
  const Tensor x = oracle::random_tensor<float>({2, 3, 5, 4}, rng);
  Tensor w(3, 3, 1, 1);
  for (int c = 0; c < 3; ++c) w(c, c, 0, 0) = 1.f;
  const std::vector<float> b(3, 0.f);
  CHECK(conv2d(x, w, std::span<const float>(b), ConvSpec::pointwise()) == x);
}

TEST_CASE("conv2d all-ones 3x3 on all-ones 5x5") {
  // Values frozen from naive_conv2d: 9 inside, 6 on edges, 4 at corners.
  const Tensor64 x = ones({1, 1, 5, 5});
  const Tensor64 w = ones({1, 1, 3, 3});
  const Tensor64 y = conv2d(x, w, {}, ConvSpec::same3x3(1));
  CHECK(y == oracle::naive_conv2d(x, w, {}, ConvSpec::same3x3(1)));
  CHECK(y(0, 0, 2, 2) == 9.0);
  CHECK(y(0, 0, 1, 3) == 9.0);
  CHECK(y(0, 0, 0, 0) == 4.0);
  CHECK(y(0, 0, 4, 4) == 4.0);
  CHECK(y(0, 0, 0, 2) == 6.0);
}

TEST_CASE("conv2d dilated random case matches naive oracle") {
  Rng rng(2);
  const Tensor x = oracle::random_tensor<float>({1, 3, 9, 9}, rng);
  const Tensor w = oracle::random_tensor<float>({2, 3, 3, 3}, rng);
  const std::vector<float> b{0.25f, -0.5f};
  const ConvSpec spec = ConvSpec::same3x3(6);
  const Tensor y = conv2d(x, w, std::span<const float>(b), spec);
  const std::vector<double> b64(b.begin(), b.end());
  const Tensor64 ref = oracle::naive_conv2d(
      tensor_cast<double>(x), tensor_cast<double>(w), b64, spec);
  CHECK(y.shape() == Shape{1, 2, 9, 9});
  CHECK(max_rel_error(y, ref) <= 1e-5);
}

TEST_CASE("conv2d matches naive oracle over strides and dilations") {
  Rng rng(3);
  for (int stride : {1, 2}) {
    for (int d : {1, 2, 6, 12, 18}) {
      const Shape xs{2, 3, 7 + d % 3, 9};
      const ConvSpec spec{3, 3, stride, d, d};
      const Tensor64 x = oracle::random_tensor<double>(xs, rng);
      const Tensor64 w = oracle::random_tensor<double>({4, 3, 3, 3}, rng);
      const std::vector<double> b{0.1, 0.2, 0.3, 0.4};
      const Tensor64 y = conv2d(x, w, std::span<const double>(b), spec);
      const Tensor64 ref = oracle::naive_conv2d(x, w, b, spec);
      CHECK(max_rel_error(y, ref) <= 1e-12);
      const Tensor yf = conv2d(tensor_cast<float>(x), tensor_cast<float>(w),
                               std::span<const float>(std::vector<float>(
                                   b.begin(), b.end())),
                               spec);
      CHECK(max_rel_error(yf, ref) <= 1e-5);
    }
  }
}

TEST_CASE("conv2d shape errors") {
  const Tensor x(1, 3, 5, 5);
  CHECK_THROWS_AS(conv2d(x, Tensor(2, 4, 3, 3), {}, ConvSpec::same3x3(1)),
                  ShapeError);
  CHECK_THROWS_AS(conv2d(x, Tensor(2, 3, 1, 1), {}, ConvSpec::same3x3(1)),
                  ShapeError);
  const std::vector<float> bad_bias(3);
  CHECK_THROWS_AS(conv2d(x, Tensor(2, 3, 3, 3),
                         std::span<const float>(bad_bias), ConvSpec::same3x3(1)),
                  ShapeError);
  // Effective extent 37 > 5 with no padding.
  CHECK_THROWS_AS(conv2d(x, Tensor(2, 3, 3, 3), {}, ConvSpec{3, 3, 1, 0, 18}),
                  ShapeError);
  try {
    conv2d(x, Tensor(2, 4, 3, 3), {}, ConvSpec::same3x3(1));
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("(2,4,3,3)") != std::string::npos);
  }
}

TEST_CASE("conv2d is linear in x") {
  Rng rng(4);
  const Shape xs{1, 2, 8, 8};
  const Tensor x = oracle::random_tensor<float>(xs, rng);
  const Tensor z = oracle::random_tensor<float>(xs, rng);
  const Tensor w = oracle::random_tensor<float>({3, 2, 3, 3}, rng);
  const ConvSpec spec = ConvSpec::same3x3(2);
  const float a = 1.5f, b = -0.75f;
  const Tensor lhs = conv2d(add(scale(x, a), scale(z, b)), w, {}, spec);
  const Tensor rhs = add(scale(conv2d(x, w, {}, spec), a),
                         scale(conv2d(z, w, {}, spec), b));
  CHECK(max_rel_error(lhs, rhs) <= 1e-5);
}

TEST_CASE("dilated 3x3 with d=6 reads a 13-pixel span") {
  // Probe every input position with a one-hot image and record which ones
  // influence the centre output pixel.
  const int size = 21, centre = 10;
  const Tensor64 w = ones({1, 1, 3, 3});
  std::vector<int> rows, cols;
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      Tensor64 x(1, 1, size, size);
      x(0, 0, r, c) = 1.0;
      const Tensor64 y = conv2d(x, w, {}, ConvSpec::same3x3(6));
      if (y(0, 0, centre, centre) != 0.0) {
        rows.push_back(r);
        cols.push_back(c);
      }
    }
  }
  CHECK(rows.size() == 9);
  CHECK(*std::max_element(rows.begin(), rows.end()) -
            *std::min_element(rows.begin(), rows.end()) + 1 ==
        13);
  CHECK(*std::max_element(cols.begin(), cols.end()) -
            *std::min_element(cols.begin(), cols.end()) + 1 ==
        13);
  CHECK(ConvSpec::same3x3(6).extent_h() == 13);
}

TEST_CASE("global_avg_pool") {
  CHECK(global_avg_pool(Tensor(Shape{1, 2, 3, 3}, 0.5f))(0, 1, 0, 0) == 0.5f);
  const Tensor t(Shape{1, 1, 2, 2}, std::vector<float>{1, 2, 3, 4});
  CHECK(global_avg_pool(t)(0, 0, 0, 0) == 2.5f);
  Rng rng(5);
  const Tensor one = oracle::random_tensor<float>({2, 3, 1, 1}, rng);
  CHECK(global_avg_pool(one) == one);

  // Invariant to a permutation of spatial positions.
  const Tensor64 x = oracle::random_tensor<double>({1, 2, 4, 5}, rng);
  Tensor64 perm = x;
  for (int c = 0; c < 2; ++c) {
    auto p = perm.plane(0, c);
    std::reverse(p.begin(), p.end());
    std::rotate(p.begin(), p.begin() + 3, p.end());
  }
  CHECK(max_rel_error(global_avg_pool(perm), global_avg_pool(x)) <= 1e-15);
  CHECK_THROWS_AS(global_avg_pool(Tensor(1, 1, 0, 3)), ShapeError);
}

TEST_CASE("bilinear_resize") {
  Rng rng(6);
  const Tensor x = oracle::random_tensor<float>({1, 2, 5, 7}, rng);
  CHECK(bilinear_resize(x, 5, 7) == x);

  const Tensor k(Shape{1, 1, 3, 4}, 2.25f);
  for (auto [h, w] : {std::pair{1, 1}, {7, 3}, {12, 16}}) {
    const Tensor y = bilinear_resize(k, h, w);
    CHECK(std::all_of(y.values().begin(), y.values().end(),
                      [](float v) { return v == 2.25f; }));
  }

  // Horizontal ramp 0..1 over 5 columns, upscaled 2x.
  Tensor ramp(1, 1, 2, 5);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 5; ++c) ramp(0, 0, r, c) = c / 4.0f;
  const Tensor up = bilinear_resize(ramp, 4, 10);
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 10; ++c) {
      CHECK(up(0, 0, r, c) >= 0.f);
      CHECK(up(0, 0, r, c) <= 1.f);
      if (c > 0) CHECK(up(0, 0, r, c) >= up(0, 0, r, c - 1));
    }
  }
  // Half-pixel convention: output column 1 maps to source 0.25.
  CHECK(up(0, 0, 0, 1) == doctest::Approx(0.25 / 4.0));
  CHECK(up(0, 0, 0, 0) == 0.f);
  CHECK(up(0, 0, 0, 9) == 1.f);
}

TEST_CASE("bilinear_sample") {
  Tensor x(1, 2, 3, 4);
  std::iota(x.values().begin(), x.values().end(), 1.f);
  const std::vector<SamplePoint> pts{
      {0, 1, 2.0, 3.0}, {0, 0, 1.0, 1.5}, {0, 0, -5.0, 1.0}, {0, 0, 1.0, 4.5}};
  const auto v = bilinear_sample(x, std::span<const SamplePoint>(pts));
  CHECK(v[0] == x(0, 1, 2, 3));
  CHECK(v[1] == (x(0, 0, 1, 1) + x(0, 0, 1, 2)) / 2);
  CHECK(v[2] == 0.f);
  CHECK(v[3] == 0.f);
  // Half a pixel beyond the last column: only the in-bounds neighbour counts.
  const SamplePoint edge{0, 0, 0.0, 3.5};
  CHECK(bilinear_sample(x, std::span<const SamplePoint>(&edge, 1))[0] ==
        doctest::Approx(x(0, 0, 0, 3) * 0.5));
  const SamplePoint bad{0, 2, 0.0, 0.0};
  CHECK_THROWS_AS(bilinear_sample(x, std::span<const SamplePoint>(&bad, 1)),
                  ShapeError);
}

TEST_CASE("concat_channels") {
  Rng rng(7);
  const Tensor a = oracle::random_tensor<float>({2, 3, 4, 4}, rng);
  CHECK(concat_channels<float>({&a}) == a);

  std::vector<Tensor> parts;
  for (int c : {32, 64, 128, 256}) {
    parts.push_back(oracle::random_tensor<float>({1, c, 2, 2}, rng));
  }
  const Tensor cat = concat_channels<float>(std::span<const Tensor>(parts));
  CHECK(cat.c() == 480);
  int offset = 0;
  for (const auto& p : parts) {
    CHECK(slice_channels(cat, offset, p.c()) == p);
    offset += p.c();
  }
  const Tensor bad(1, 2, 3, 2);
  CHECK_THROWS_AS(concat_channels<float>({&parts[0], &bad}), ShapeError);
}

TEST_CASE("numeric_gradient closed forms") {
  Rng rng(8);
  const Tensor64 x = oracle::random_tensor<double>({1, 2, 3, 3}, rng);
  auto sum = [](const Tensor64& t) {
    double s = 0;
    for (double v : t.values()) s += v;
    return s;
  };
  const Tensor64 g1 = numeric_gradient(sum, x, 1e-5);
  for (double v : g1.values()) CHECK(v == doctest::Approx(1.0).epsilon(1e-9));

  auto sumsq = [](const Tensor64& t) {
    double s = 0;
    for (double v : t.values()) s += v * v;
    return s;
  };
  const Tensor64 g2 = numeric_gradient(sumsq, x, 1e-5);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(std::abs(g2[i] - 2 * x[i]) <= 1e-8);
  }
}

TEST_CASE("analytic backward passes match central differences") {
  Rng rng(9);
  constexpr double kTol = 1e-6;
  constexpr double kStep = 1e-6;

  SUBCASE("conv2d") {
    for (const ConvSpec spec :
         {ConvSpec::same3x3(1), ConvSpec{3, 3, 2, 1, 1}, ConvSpec::same3x3(6),
          ConvSpec::pointwise()}) {
      const Tensor64 x = oracle::random_tensor<double>({2, 3, 7, 6}, rng);
      const Tensor64 w =
          oracle::random_tensor<double>({2, 3, spec.kh, spec.kw}, rng);
      const Tensor64 r = oracle::random_tensor<double>(
          {2, 2, spec.out_h(7), spec.out_w(6)}, rng);
      const auto g = conv2d_backward(x, w, spec, r);
      const Tensor64 nx = numeric_gradient(
          [&](const Tensor64& v) {
            return oracle::dot(r, conv2d(v, w, {}, spec));
          },
          x, kStep);
      const Tensor64 nw = numeric_gradient(
          [&](const Tensor64& v) {
            return oracle::dot(r, conv2d(x, v, {}, spec));
          },
          w, kStep);
      CHECK(norm_rel_error(g.dx, nx) <= kTol);
      CHECK(norm_rel_error(g.dw, nw) <= kTol);
      // d/d bias = sum of upstream gradient per channel.
      for (int co = 0; co < 2; ++co) {
        double s = 0;
        for (int n = 0; n < 2; ++n)
          for (double v : r.plane(n, co)) s += v;
        CHECK(g.db[co] == doctest::Approx(s).epsilon(1e-12));
      }
    }
  }

  SUBCASE("conv2d output sum") {
    const Tensor64 x = oracle::random_tensor<double>({1, 2, 6, 6}, rng);
    const Tensor64 w = oracle::random_tensor<double>({3, 2, 3, 3}, rng);
    const ConvSpec spec = ConvSpec::same3x3(2);
    const Tensor64 g_up(Shape{1, 3, 6, 6}, 1.0);
    const auto g = conv2d_backward(x, w, spec, g_up);
    const Tensor64 n = numeric_gradient(
        [&](const Tensor64& v) {
          const Tensor64 y = conv2d(v, w, {}, spec);
          double s = 0;
          for (double e : y.values()) s += e;
          return s;
        },
        x, 1e-5);
    CHECK(norm_rel_error(g.dx, n) <= kTol);
  }

  SUBCASE("global_avg_pool") {
    const Tensor64 x = oracle::random_tensor<double>({2, 3, 4, 5}, rng);
    const Tensor64 r = oracle::random_tensor<double>({2, 3, 1, 1}, rng);
    const Tensor64 n = numeric_gradient(
        [&](const Tensor64& v) { return oracle::dot(r, global_avg_pool(v)); },
        x, kStep);
    CHECK(norm_rel_error(global_avg_pool_backward(x.shape(), r), n) <= kTol);
  }

  SUBCASE("bilinear_resize") {
    for (auto [h, w] : {std::pair{9, 11}, {2, 3}, {16, 16}, {1, 1}}) {
      const Tensor64 x = oracle::random_tensor<double>({1, 2, 4, 4}, rng);
      const Tensor64 r = oracle::random_tensor<double>({1, 2, h, w}, rng);
      const Tensor64 n = numeric_gradient(
          [&](const Tensor64& v) {
            return oracle::dot(r, bilinear_resize(v, h, w));
          },
          x, kStep);
      CHECK(norm_rel_error(bilinear_resize_backward(x.shape(), r), n) <= kTol);
    }
  }

  SUBCASE("bilinear_sample") {
    const Tensor64 x = oracle::random_tensor<double>({1, 2, 5, 6}, rng);
    std::vector<SamplePoint> pts;
    for (int i = 0; i < 40; ++i) {
      pts.push_back({0, i % 2, rng.uniform(-1.5, 5.5), rng.uniform(-1.5, 6.5)});
    }
    std::vector<double> r(pts.size());
    for (double& v : r) v = rng.normal();
    auto probe = [&](const Tensor64& v, std::span<const SamplePoint> p) {
      const auto s = bilinear_sample(v, p);
      double acc = 0;
      for (std::size_t i = 0; i < s.size(); ++i) acc += r[i] * s[i];
      return acc;
    };
    const auto g = bilinear_sample_backward(
        x, std::span<const SamplePoint>(pts), std::span<const double>(r));
    const Tensor64 nx = numeric_gradient(
        [&](const Tensor64& v) {
          return probe(v, std::span<const SamplePoint>(pts));
        },
        x, kStep);
    CHECK(norm_rel_error(g.dx, nx) <= kTol);

    // Positions as a (1, 2, 1, P) tensor of rows then columns.
    Tensor64 pos(1, 2, 1, static_cast<int>(pts.size()));
    for (std::size_t i = 0; i < pts.size(); ++i) {
      pos(0, 0, 0, i) = pts[i].row;
      pos(0, 1, 0, i) = pts[i].col;
    }
    const Tensor64 np = numeric_gradient(
        [&](const Tensor64& v) {
          auto moved = pts;
          for (std::size_t i = 0; i < moved.size(); ++i) {
            moved[i].row = v(0, 0, 0, i);
            moved[i].col = v(0, 1, 0, i);
          }
          return probe(x, std::span<const SamplePoint>(moved));
        },
        pos, kStep);
    Tensor64 ap(pos.shape());
    for (std::size_t i = 0; i < pts.size(); ++i) {
      ap(0, 0, 0, i) = g.drow[i];
      ap(0, 1, 0, i) = g.dcol[i];
    }
    CHECK(norm_rel_error(ap, np) <= kTol);
  }

  SUBCASE("concat_channels") {
    const Tensor64 a = oracle::random_tensor<double>({1, 2, 3, 3}, rng);
    const Tensor64 b = oracle::random_tensor<double>({1, 3, 3, 3}, rng);
    const Tensor64 r = oracle::random_tensor<double>({1, 5, 3, 3}, rng);
    const std::vector<int> widths{2, 3};
    const auto parts = split_channels(r, std::span<const int>(widths));
    const Tensor64 na = numeric_gradient(
        [&](const Tensor64& v) {
          return oracle::dot(r, concat_channels<double>({&v, &b}));
        },
        a, kStep);
    const Tensor64 nb = numeric_gradient(
        [&](const Tensor64& v) {
          return oracle::dot(r, concat_channels<double>({&a, &v}));
        },
        b, kStep);
    CHECK(norm_rel_error(parts[0], na) <= kTol);
    CHECK(norm_rel_error(parts[1], nb) <= kTol);
  }

  SUBCASE("sigmoid") {
    const Tensor64 x = oracle::random_tensor<double>({1, 3, 4, 4}, rng, 3.0);
    const Tensor64 r = oracle::random_tensor<double>(x.shape(), rng);
    const Tensor64 n = numeric_gradient(
        [&](const Tensor64& v) { return oracle::dot(r, sigmoid(v)); }, x,
        kStep);
    CHECK(norm_rel_error(sigmoid_backward(sigmoid(x), r), n) <= kTol);
  }
}

TEST_CASE("operations keep finite inputs finite") {
  Rng rng(10);
  const Tensor x = oracle::random_tensor<float>({1, 3, 6, 6}, rng, 100.0);
  const Tensor w = oracle::random_tensor<float>({2, 3, 3, 3}, rng);
  CHECK(conv2d(x, w, {}, ConvSpec::same3x3(12)).all_finite());
  CHECK(sigmoid(x).all_finite());
  CHECK(bilinear_resize(x, 11, 3).all_finite());
  CHECK(global_avg_pool(x).all_finite());
}
