#include <doctest.h>

#include <cmath>

#include "bapose/checks/criteria.h"
#include "bapose/checks/gradcheck.h"
#include "bapose/checks/oracles.h"
#include "bapose/dataio.h"
#include "bapose/synthetic.h"
#include "bapose/train.h"

using namespace bapose;

namespace {

std::string bytes_of(const Model<float>& m, const ModelConfig& cfg) {
  return save_checkpoint({m, OptimState::zeros_like(m), 0}, cfg);
}

}  // namespace

TEST_CASE("learning-rate plateaus") {
  const TrainConfig cfg;
  CHECK(lr_at_epoch(0, cfg) == 1e-3);
  CHECK(lr_at_epoch(89, cfg) == 1e-3);
  CHECK(lr_at_epoch(90, cfg) == 1e-3 * 0.1);
  CHECK(lr_at_epoch(95, cfg) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(lr_at_epoch(125, cfg) == doctest::Approx(1e-5).epsilon(1e-12));
  CHECK(cfg.rotation == 30);
  CHECK(cfg.scale_min == 0.75);
  CHECK(cfg.scale_max == 1.5);
  CHECK(cfg.translation == 40);
}

TEST_CASE("loss closed forms") {
  const Tensor t(1, 2, 3, 3, 0.f);
  const auto same = heatmap_loss(t, t);
  CHECK(same.value == 0.0);
  const auto half = heatmap_loss(Tensor(1, 2, 3, 3, 0.5f), t);
  CHECK(half.value == doctest::Approx(0.25));
  CHECK(half.grad(0, 1, 2, 2) == doctest::Approx(2 * 0.5 / 18));

  Tensor pred(1, 2, 2, 2), target(1, 2, 2, 2), mask(1, 2, 2, 2);
  const Tensor norm(1, 1, 2, 2, 1.f);
  pred(0, 1, 1, 0) = 0.5f;
  mask(0, 1, 1, 0) = 1.f;
  CHECK(offset_loss(pred, target, mask, norm).value == doctest::Approx(0.125));
  // large errors are linear
  pred(0, 1, 1, 0) = 3.f;
  CHECK(offset_loss(pred, target, mask, norm).value == doctest::Approx(2.5));
  // the normaliser divides the error
  const Tensor norm2(1, 1, 2, 2, 6.f);
  CHECK(offset_loss(pred, target, mask, norm2).value == doctest::Approx(0.125));
  // masked-out entries are ignored; an empty mask gives zero
  CHECK(offset_loss(pred, target, Tensor(1, 2, 2, 2), norm).value == 0.0);
}

TEST_CASE("total loss weights and zero loss at the targets") {
  TrainConfig tc;
  TrainingTargets<float> tg{Tensor(1, 2, 4, 4, 0.5f), Tensor(1, 2, 4, 4, 1.f),
                            Tensor(1, 2, 4, 4, 1.f), Tensor(1, 1, 4, 4, 1.f)};
  DWaspOutput<float> out{tg.heatmaps, tg.offsets};
  DWaspOutput<float> dout;
  CHECK(total_loss(out, tg, tc, &dout).total == 0.0);
  out.heatmaps.fill(0.f);
  out.offsets.fill(1.5f);
  const LossBreakdown l = total_loss(out, tg, tc, &dout);
  CHECK(l.heat == doctest::Approx(0.25));
  CHECK(l.offset == doctest::Approx(0.125));
  CHECK(l.total == doctest::Approx(0.25 + tc.offset_weight * 0.125));
  CHECK(dout.heatmaps.shape() == out.heatmaps.shape());
  CHECK(dout.offsets.shape() == out.offsets.shape());
}

TEST_CASE("optimizer") {
  const ModelConfig cfg = check::gradcheck_model_config(3);
  const Model<float> start = init_model<float>(cfg, 3);

  SUBCASE("zero gradients leave the weights unchanged") {
    Model<float> m = start;
    OptimState s = OptimState::zeros_like(m);
    for (int i = 0; i < 3; ++i) optim_step(m, Model<float>::zeros(cfg), s, 1e-2);
    CHECK(bytes_of(m, cfg) == bytes_of(start, cfg));
    CHECK(s.step == 3);
  }

  SUBCASE("constant gradient follows the hand-iterated recurrence") {
    Model<float> m = start;
    Model<float> g = Model<float>::zeros(cfg);
    g.visit([](const std::string&, Tensor& t) { t.fill(0.3f); });
    OptimState s = OptimState::zeros_like(m);
    const double lr = 1e-2;
    float w = m.backbone.stem[0].w[0];
    float mm = 0, vv = 0;
    for (int t = 1; t <= 4; ++t) {
      optim_step(m, g, s, lr);
      const double gj = 0.3f;
      const double mj = 0.9 * mm + 0.1 * gj;
      const double vj = 0.999 * vv + 0.001 * gj * gj;
      mm = static_cast<float>(mj);
      vv = static_cast<float>(vj);
      w = static_cast<float>(w - lr * (mj / (1 - std::pow(0.9, t))) /
                                     (std::sqrt(vj / (1 - std::pow(0.999, t))) + 1e-8));
      CHECK(m.backbone.stem[0].w[0] == w);
      CHECK(s.m[0][0] == mm);
      CHECK(s.v[0][0] == vv);
    }
    // bias-corrected steps of a constant gradient are close to lr each
    CHECK(w == doctest::Approx(start.backbone.stem[0].w[0] - 4 * lr).epsilon(1e-4));
  }
}

TEST_CASE("identity augmentation leaves the sample unchanged") {
  Rng rng(61);
  PeopleParams pp;
  const auto data = synthetic_dataset(rng, 1, pp);
  const TrainSample out = apply_affine(data[0], affine_matrix({}, 64, 64));
  CHECK(out.image == data[0].image);
  REQUIRE(out.people.size() == data[0].people.size());
  for (std::size_t i = 0; i < out.people.size(); ++i) {
    for (std::size_t k = 0; k < out.people[i].keypoints.size(); ++k) {
      CHECK(out.people[i].keypoints[k].x ==
            doctest::Approx(data[0].people[i].keypoints[k].x).epsilon(1e-12));
      CHECK(out.people[i].keypoints[k].v == data[0].people[i].keypoints[k].v);
    }
  }
}

TEST_CASE("image centre is fixed under rotation and scale") {
  Rng rng(62);
  for (int t = 0; t < 20; ++t) {
    const AffineParams p{rng.uniform(-30, 30), rng.uniform(0.75, 1.5), 0, 0};
    const Affine m = affine_matrix(p, 40, 30);
    const double cx = 19.5, cy = 14.5;
    CHECK(m[0] * cx + m[1] * cy + m[2] == doctest::Approx(cx));
    CHECK(m[3] * cx + m[4] * cy + m[5] == doctest::Approx(cy));
    const Affine inv = invert(m);
    const double x = 3, y = 7;
    const double u = m[0] * x + m[1] * y + m[2], v = m[3] * x + m[4] * y + m[5];
    CHECK(inv[0] * u + inv[1] * v + inv[2] == doctest::Approx(x));
    CHECK(inv[3] * u + inv[4] * v + inv[5] == doctest::Approx(y));
  }
}

TEST_CASE("warped keypoints match the step-by-step transform") {
  Rng rng(63);
  const TrainConfig tc;
  PeopleParams pp;
  pp.width = 96;
  pp.height = 64;
  for (int t = 0; t < 30; ++t) {
    TrainSample s;
    s.image = Tensor(1, 3, pp.height, pp.width);
    s.people = synthetic_people(rng, pp);
    const AffineParams p = sample_affine(rng, tc);
    const TrainSample out = apply_affine(s, affine_matrix(p, pp.width, pp.height));
    for (std::size_t i = 0; i < s.people.size(); ++i) {
      for (std::size_t k = 0; k < s.people[i].keypoints.size(); ++k) {
        const Keypoint& a = s.people[i].keypoints[k];
        const Keypoint& b = out.people[i].keypoints[k];
        const auto ref = oracle::transform_point(p, pp.width, pp.height, a.x, a.y);
        const bool inside = ref[0] >= 0 && ref[0] <= pp.width - 1 && ref[1] >= 0 &&
                            ref[1] <= pp.height - 1;
        CHECK(b.labeled() == inside);
        if (inside) {
          CHECK(std::abs(b.x - ref[0]) <= 1e-6);
          CHECK(std::abs(b.y - ref[1]) <= 1e-6);
        }
      }
    }
  }
}

TEST_CASE("sampled augmentation stays in range") {
  Rng rng(64);
  const TrainConfig tc;
  for (int i = 0; i < 10000; ++i) {
    const AffineParams p = sample_affine(rng, tc);
    CHECK(std::abs(p.rotation) <= 30);
    CHECK(p.scale >= 0.75);
    CHECK(p.scale <= 1.5);
    CHECK(std::abs(p.tx) <= 40);
    CHECK(std::abs(p.ty) <= 40);
  }
}

TEST_CASE("an epoch over no images leaves the weights unchanged") {
  const ModelConfig cfg = check::gradcheck_model_config(3);
  TrainState st{init_model<float>(cfg, 4), {}, 0};
  const std::string before = bytes_of(st.model, cfg);
  TrainConfig tc;
  tc.epochs = 1;
  int calls = 0;
  train_loop({}, st, cfg, tc, [&](const EpochLog& e, const TrainState&) {
    ++calls;
    CHECK(e.total == 0.0);
  });
  CHECK(calls == 1);
  CHECK(st.epoch == 1);
  CHECK(bytes_of(st.model, cfg) == before);
}

TEST_CASE("training is deterministic and resumable") {
  check::ToyProblem toy = check::toy_problem();
  toy.images = 2;
  CHECK(check::determinism(toy, 2).passed);

  // two epochs in one go equal one epoch, a checkpoint round trip, then one more
  const auto data = toy.dataset();
  const ModelConfig& mc = toy.config.model;
  TrainConfig tc = toy.config.train;
  tc.epochs = 2;
  TrainState a{init_model<float>(mc, toy.model_seed), {}, 0};
  train_loop(data, a, mc, tc);

  TrainConfig first = tc;
  first.epochs = 1;
  TrainState b{init_model<float>(mc, toy.model_seed), {}, 0};
  train_loop(data, b, mc, first);
  Checkpoint ck = load_checkpoint(save_checkpoint({b.model, b.optim, b.epoch}, mc), mc);
  TrainState c{std::move(ck.model), std::move(ck.optim), ck.epoch};
  train_loop(data, c, mc, tc);
  CHECK(save_checkpoint({a.model, a.optim, a.epoch}, mc) ==
        save_checkpoint({c.model, c.optim, c.epoch}, mc));
}

TEST_CASE("epoch log line") {
  EpochLog e{3, 0.001, 0.5, 0.25, 0.75};
  CHECK(format_epoch_log(e) == "3\t0.001\t0.5\t0.25\t0.75");
}

TEST_CASE("targets at the output resolution") {
  check::ToyProblem toy = check::toy_problem();
  toy.images = 1;
  const auto data = toy.dataset();
  const auto tg = make_targets(data[0], toy.config.model, toy.config.train);
  const int s = toy.config.model.pyramid.base_stride;
  CHECK(tg.heatmaps.shape() ==
        Shape{1, 6, data[0].image.h() / s, data[0].image.w() / s});
  CHECK(tg.offsets.c() == 10);
  for (float v : tg.heatmaps.values()) {
    CHECK(v >= 0.f);
    CHECK(v <= 1.f);
  }
}
