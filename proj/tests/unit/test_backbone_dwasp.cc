#include <doctest.h>

#include <cmath>
#include <string>

#include "bapose/checks/gradcheck.h"
#include "bapose/checks/oracles.h"
#include "bapose/model.h"

using namespace bapose;

namespace {

Shape shape_of(const Tensor& t) { return t.shape(); }

ModelConfig default_model() { return ModelConfig{}; }

ModelConfig toy_model() { return check::gradcheck_model_config(3); }

FeaturePyramid<double> random_pyramid(const PyramidConfig& p, int h, int w,
                                      Rng& rng) {
  FeaturePyramid<double> out;
  for (int l = 0; l < 4; ++l) {
    out.levels[l] =
        oracle::random_tensor<double>({1, p.widths[l], h >> l, w >> l}, rng);
  }
  out.low_level = oracle::random_tensor<double>({1, p.stem_width, h, w}, rng);
  return out;
}

}  // namespace

TEST_CASE("backbone shapes at the default widths") {
  const ModelConfig cfg = default_model();
  const auto m = Model<float>::zeros(cfg);
  const auto p = backbone_forward(Tensor(1, 3, 64, 64), m.backbone, cfg.pyramid);
  CHECK(shape_of(p.levels[0]) == Shape{1, 32, 16, 16});
  CHECK(shape_of(p.levels[1]) == Shape{1, 64, 8, 8});
  CHECK(shape_of(p.levels[2]) == Shape{1, 128, 4, 4});
  CHECK(shape_of(p.levels[3]) == Shape{1, 256, 2, 2});
  CHECK(shape_of(p.low_level) == Shape{1, 64, 16, 16});
  // zero weights and biases
  for (const auto& l : p.levels) {
    for (float v : l.values()) CHECK(v == 0.f);
  }
}

TEST_CASE("backbone shapes at toy widths") {
  const ModelConfig cfg = toy_model();
  Rng rng(3);
  const auto m = model_cast<float>(check::random_model(cfg, 3), cfg);
  const Tensor img = oracle::random_tensor<float>({1, 3, 32, 32}, rng);
  const auto p = backbone_forward(img, m.backbone, cfg.pyramid);
  CHECK(shape_of(p.levels[0]) == Shape{1, 4, 8, 8});
  CHECK(shape_of(p.levels[1]) == Shape{1, 8, 4, 4});
  CHECK(shape_of(p.levels[2]) == Shape{1, 16, 2, 2});
  CHECK(shape_of(p.levels[3]) == Shape{1, 32, 1, 1});
  for (const auto& l : p.levels) CHECK(l.all_finite());
}

TEST_CASE("backbone output shapes follow the config over random configs") {
  Rng rng(4);
  for (int trial = 0; trial < 25; ++trial) {
    PyramidConfig p;
    for (int l = 0; l < 4; ++l) p.widths[l] = 1 + static_cast<int>(rng.below(6));
    p.stem_width = 1 + static_cast<int>(rng.below(6));
    p.base_stride = 2 << rng.below(2);
    p.blocks = 1 + static_cast<int>(rng.below(2));
    const int m = p.input_multiple();
    const int h = m * (1 + static_cast<int>(rng.below(2)));
    const int w = m * (1 + static_cast<int>(rng.below(2)));
    const auto weights = BackboneWeights<float>::zeros(p);
    const auto out = backbone_forward(Tensor(2, 3, h, w), weights, p);
    const int bh = h / p.base_stride, bw = w / p.base_stride;
    for (int l = 0; l < 4; ++l) {
      CHECK(shape_of(out.levels[l]) == Shape{2, p.widths[l], bh >> l, bw >> l});
    }
    CHECK(shape_of(out.low_level) == Shape{2, p.stem_width, bh, bw});
  }
}

TEST_CASE("backbone rejects indivisible extents with the required padding") {
  const PyramidConfig p;  // multiple of 32
  try {
    check_backbone_input({1, 3, 60, 64}, p);
    FAIL("no error");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("multiples of 32") != std::string::npos);
    CHECK(msg.find("pad by 4 rows and 0 columns") != std::string::npos);
  }
  CHECK_THROWS_AS(check_backbone_input({1, 1, 64, 64}, p), ShapeError);
  CHECK_NOTHROW(check_backbone_input({1, 3, 96, 32}, p));
  PyramidConfig bad;
  bad.base_stride = 6;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("module widths") {
  const DWaspWidths w = default_model().widths();
  CHECK(w.fused == 480);
  CHECK(w.final_width == 120);
  CHECK(w.heatmaps == 18);
  CHECK(w.offsets == 34);
  CHECK(w.concat == 5 * 128);
  CHECK(w.waterfall == 480);
  CHECK(w.group == 120 / 17);

  PyramidConfig toy;
  toy.widths = {4, 8, 16, 32};
  DWaspConfig d;
  d.keypoints = 3;
  CHECK(resolve_widths(d, toy).fused == 60);
  CHECK(resolve_widths(d, toy).final_width == 15);

  d.offset_mode = OffsetMode::kShared;
  d.center_map = false;
  const DWaspWidths s = resolve_widths(d, toy);
  CHECK(s.groups == 1);
  CHECK(s.offsets == 2);
  CHECK(s.heatmaps == 3);
  CHECK(s.group == 15);

  d.offset_mode = OffsetMode::kPerKeypoint;
  d.keypoints = 16;  // more keypoints than final channels
  CHECK_THROWS_AS(resolve_widths(d, toy), ConfigError);
}

TEST_CASE("every weight shape follows the resolved widths") {
  Rng rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    ModelConfig cfg;
    for (int l = 0; l < 4; ++l) {
      cfg.pyramid.widths[l] = 1 + static_cast<int>(rng.below(5));
    }
    cfg.pyramid.stem_width = 1 + static_cast<int>(rng.below(5));
    cfg.pyramid.base_stride = 2;
    auto& d = cfg.dwasp;
    d.branch_width = 1 + static_cast<int>(rng.below(5));
    d.keypoints = 1 + static_cast<int>(rng.below(3));
    d.final_width = d.keypoints + static_cast<int>(rng.below(3));
    d.waterfall_width = static_cast<int>(rng.below(4));
    d.group_width = static_cast<int>(rng.below(3));
    d.head_width = static_cast<int>(rng.below(3));
    d.center_map = rng.below(2) == 0;
    d.offset_mode = rng.below(2) == 0 ? OffsetMode::kShared : OffsetMode::kPerKeypoint;
    const DWaspWidths w = cfg.widths();
    const int fused = cfg.pyramid.fused_width();
    CHECK(w.fused == fused);
    CHECK(w.concat == 5 * d.branch_width);
    CHECK(w.waterfall == (d.waterfall_width ? d.waterfall_width : fused));
    CHECK(w.head == (d.head_width ? d.head_width : w.final_width));
    CHECK(w.groups == (d.offset_mode == OffsetMode::kShared ? 1 : d.keypoints));
    CHECK(w.group == (d.group_width ? d.group_width : w.final_width / w.groups));
    CHECK(w.heatmaps == d.keypoints + (d.center_map ? 1 : 0));

    const auto m = Model<float>::zeros(cfg);
    CHECK(m.dwasp.branches[0].w.shape() == Shape{w.branch, fused, 3, 3});
    CHECK(m.dwasp.waterfall.w.shape() == Shape{w.waterfall, w.concat, 1, 1});
    CHECK(m.dwasp.low_level.w.shape() ==
          Shape{w.waterfall, cfg.pyramid.stem_width, 1, 1});
    CHECK(m.dwasp.reduce.w.shape() == Shape{w.final_width, w.waterfall, 1, 1});
    CHECK(m.dwasp.kp_out.w.shape() == Shape{w.heatmaps, w.head, 1, 1});
    CHECK(static_cast<int>(m.dwasp.off_groups.size()) == w.groups);

    const int size = cfg.pyramid.input_multiple();
    const auto out = model_forward(Tensor(1, 3, size, size), m, cfg);
    CHECK(out.heatmaps.shape() == Shape{1, w.heatmaps, size / 2, size / 2});
    CHECK(out.offsets.shape() == Shape{1, w.offsets, size / 2, size / 2});
  }
}

TEST_CASE("fuse_pyramid") {
  Rng rng(6);
  PyramidConfig p;
  p.widths = {4, 8, 16, 32};
  p.stem_width = 8;
  const auto pyr = random_pyramid(p, 8, 8, rng);
  const Tensor64 g0 = fuse_pyramid(pyr);
  CHECK(g0.shape() == Shape{1, 60, 8, 8});
  CHECK(slice_channels(g0, 0, 4) == pyr.levels[0]);
  CHECK(slice_channels(g0, 4, 8) == bilinear_resize(pyr.levels[1], 8, 8));

  // single-level config: the other slices are empty and skipped
  PyramidConfig single = p;
  single.widths = {5, 0, 0, 0};
  const auto one = random_pyramid(single, 8, 8, rng);
  CHECK(fuse_pyramid(one) == one.levels[0]);
}

TEST_CASE("waterfall and low-level fusion match straight-line oracles") {
  const ModelConfig cfg = toy_model();
  const auto m = check::random_model(cfg, 7);
  Rng rng(7);
  const auto pyr = random_pyramid(cfg.pyramid, 8, 8, rng);
  const Tensor64 g0 = fuse_pyramid(pyr);
  const Tensor64 wf = waterfall_forward(g0, m.dwasp, cfg.dwasp);
  CHECK(wf.shape() == Shape{1, cfg.widths().waterfall, 8, 8});
  CHECK(norm_rel_error(wf, oracle::straight_waterfall(g0, m.dwasp, cfg.dwasp)) <=
        1e-6);
  const Tensor64 ll = fuse_low_level(pyr.low_level, wf, m.dwasp);
  CHECK(ll.shape() == Shape{1, cfg.widths().final_width, 8, 8});
  CHECK(norm_rel_error(ll, oracle::straight_low_level(pyr.low_level, wf,
                                                      m.dwasp)) <= 1e-6);
}

TEST_CASE("waterfall output depends on the dilation order") {
  ModelConfig cfg = toy_model();
  cfg.dwasp.dilations = {1, 2, 3, 4};
  const auto m = check::random_model(cfg, 8);
  Rng rng(8);
  const Tensor64 g0 =
      fuse_pyramid(random_pyramid(cfg.pyramid, 8, 8, rng));
  DWaspConfig reversed = cfg.dwasp;
  reversed.dilations = {4, 3, 2, 1};
  const Tensor64 a = waterfall_forward(g0, m.dwasp, cfg.dwasp);
  const Tensor64 b = waterfall_forward(g0, m.dwasp, reversed);
  CHECK(norm_rel_error(a, b) > 1e-3);
}

TEST_CASE("waterfall width is independent of the branch width") {
  ModelConfig cfg = toy_model();
  for (int b : {1, 3, 9}) {
    cfg.dwasp.branch_width = b;
    const auto m = check::random_model(cfg, 9);
    Rng rng(9);
    const Tensor64 g0 = fuse_pyramid(random_pyramid(cfg.pyramid, 8, 8, rng));
    CHECK(waterfall_forward(g0, m.dwasp, cfg.dwasp).c() ==
          cfg.dwasp.waterfall_width);
  }
}

TEST_CASE("zero low-level projection isolates the waterfall path") {
  const ModelConfig cfg = toy_model();
  auto m = check::random_model(cfg, 10);
  m.dwasp.low_level.w.fill(0.0);
  m.dwasp.low_level.b.fill(0.0);
  Rng rng(10);
  const auto pyr = random_pyramid(cfg.pyramid, 8, 8, rng);
  const Tensor64 wf = waterfall_forward(fuse_pyramid(pyr), m.dwasp, cfg.dwasp);
  const Tensor64 a = fuse_low_level(pyr.low_level, wf, m.dwasp);
  const Tensor64 other = oracle::random_tensor<double>(pyr.low_level.shape(), rng);
  CHECK(fuse_low_level(other, wf, m.dwasp) == a);
}

TEST_CASE("zero module weights give zero stages and a centre map of one half") {
  const ModelConfig cfg = toy_model();
  const auto m = Model<double>::zeros(cfg);
  Rng rng(11);
  const auto pyr = random_pyramid(cfg.pyramid, 8, 8, rng);
  const Tensor64 wf = waterfall_forward(fuse_pyramid(pyr), m.dwasp, cfg.dwasp);
  for (double v : wf.values()) CHECK(v == 0.0);
  const auto out = dwasp_forward(pyr, m.dwasp, cfg.dwasp);
  const int k = cfg.dwasp.keypoints;
  for (double v : out.heatmaps.plane(0, k)) CHECK(v == 0.5);
}

TEST_CASE("module output shapes") {
  SUBCASE("default widths, 256 x 256 input") {
    const ModelConfig cfg = default_model();
    const auto m = Model<float>::zeros(cfg);
    const auto out = model_forward(Tensor(1, 3, 256, 256), m, cfg);
    CHECK(out.heatmaps.shape() == Shape{1, 18, 64, 64});
    CHECK(out.offsets.shape() == Shape{1, 34, 64, 64});
  }
  SUBCASE("one keypoint, group width one") {
    ModelConfig cfg = toy_model();
    cfg.dwasp.keypoints = 1;
    cfg.dwasp.group_width = 1;
    const auto m = model_cast<float>(check::random_model(cfg, 12), cfg);
    const auto out = model_forward(Tensor(2, 3, 32, 32, 0.5f), m, cfg);
    CHECK(out.heatmaps.shape() == Shape{2, 2, 8, 8});
    CHECK(out.offsets.shape() == Shape{2, 2, 8, 8});
  }
}

TEST_CASE("heatmaps lie in (0, 1) and outputs are finite") {
  const ModelConfig cfg = toy_model();
  Rng rng(13);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto m = model_cast<float>(check::random_model(cfg, seed), cfg);
    const Tensor img = oracle::random_tensor<float>({1, 3, 32, 32}, rng);
    const auto out = model_forward(img, m, cfg);
    for (float v : out.heatmaps.values()) {
      CHECK(v > 0.f);
      CHECK(v < 1.f);
    }
    CHECK(out.offsets.all_finite());
  }
}

TEST_CASE("model forward is identical in repeated runs") {
  const ModelConfig cfg = toy_model();
  const auto m = model_cast<float>(check::random_model(cfg, 14), cfg);
  Rng rng(14);
  const Tensor img = oracle::random_tensor<float>({1, 3, 32, 32}, rng);
  const auto a = model_forward(img, m, cfg);
  const auto b = model_forward(img, m, cfg);
  CHECK(a.heatmaps == b.heatmaps);
  CHECK(a.offsets == b.offsets);
}
