#include "bapose/checks/criteria.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <sstream>

#include "bapose/adaptive_conv.h"
#include "bapose/checks/gradcheck.h"
#include "bapose/checks/oracles.h"
#include "bapose/dataio.h"
#include "bapose/decode.h"
#include "bapose/metrics.h"
#include "bapose/targets.h"

namespace bapose::check {

namespace {

using Clock = std::chrono::steady_clock;

std::string num(double v, int precision = 3) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

// Runs body, which fills in passed/detail, and records the wall time.
CriterionResult timed(int id, const std::string& name,
                      const std::function<void(CriterionResult&)>& body,
                      double limit_seconds = 0) {
  CriterionResult r;
  r.id = id;
  r.name = name;
  const auto t0 = Clock::now();
  try {
    body(r);
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("exception: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  if (limit_seconds > 0 && r.seconds >= limit_seconds) {
    r.passed = false;
    r.detail += "; exceeded the " + num(limit_seconds) + " s budget";
  }
  return r;
}

int pick(Rng& rng, int lo, int hi) {
  return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
}

}  // namespace

std::string format_result(const CriterionResult& r) {
  std::ostringstream os;
  os << (r.passed ? "[PASS] " : "[FAIL] ") << r.id << " " << r.name << " ("
     << std::fixed << std::setprecision(1) << r.seconds << " s): " << r.detail;
  return os.str();
}

CriterionResult conv_oracle(int cases, std::uint64_t seed) {
  return timed(1, "convolution oracle", [&](CriterionResult& r) {
    Rng rng(seed);
    const int dilations[] = {1, 2, 6, 12, 18};
    double worst = 0;
    for (int i = 0; i < cases; ++i) {
      const int d = dilations[rng.below(5)];
      const ConvSpec spec{3, 3, pick(rng, 1, 2), d, d};
      const Shape xs{pick(rng, 1, 2), pick(rng, 1, 4), pick(rng, 1, 9),
                     pick(rng, 1, 9)};
      const Tensor64 x = oracle::random_tensor<double>(xs, rng);
      const Tensor64 w =
          oracle::random_tensor<double>({pick(rng, 1, 4), xs.c, 3, 3}, rng);
      const Tensor64 b = oracle::random_tensor<double>({1, w.n(), 1, 1}, rng);
      const Tensor64 ref =
          oracle::naive_conv2d(x, w, std::span<const double>(b.values()), spec);
      const Tensor bf = tensor_cast<float>(b);
      const Tensor y = conv2d(tensor_cast<float>(x), tensor_cast<float>(w),
                              std::span<const float>(bf.values()), spec);
      worst = std::max(worst, max_rel_error(y, ref));
    }
    r.passed = worst <= 1e-5;
    r.detail = std::to_string(cases) + " cases, max rel err " + num(worst) +
               " (limit 1e-05)";
  }, 30);
}

CriterionResult adaptive_degeneracy(int cases, std::uint64_t seed) {
  return timed(2, "adaptive-conv degeneracy", [&](CriterionResult& r) {
    Rng rng(seed);
    double worst64 = 0, worst32 = 0;
    for (int i = 0; i < cases; ++i) {
      const Shape xs{pick(rng, 1, 2), pick(rng, 1, 4), pick(rng, 1, 9),
                     pick(rng, 1, 9)};
      const Tensor64 x = oracle::random_tensor<double>(xs, rng);
      const Tensor64 w =
          oracle::random_tensor<double>({pick(rng, 1, 4), xs.c, 3, 3}, rng);
      const Tensor64 b = oracle::random_tensor<double>({1, w.n(), 1, 1}, rng);
      const auto bias = std::span<const double>(b.values());
      const Tensor64 ref = conv2d(x, w, bias, ConvSpec::same3x3(1));
      const Tensor64 y =
          adaptive_conv(x, w, bias, canonical_offsets<double>(xs.n, xs.h, xs.w));
      worst64 = std::max(worst64, max_rel_error(y, ref));

      const Tensor bf = tensor_cast<float>(b);
      const Tensor y32 = adaptive_conv(
          tensor_cast<float>(x), tensor_cast<float>(w),
          std::span<const float>(bf.values()),
          canonical_offsets<float>(xs.n, xs.h, xs.w));
      const Tensor ref32 =
          conv2d(tensor_cast<float>(x), tensor_cast<float>(w),
                 std::span<const float>(bf.values()), ConvSpec::same3x3(1));
      worst32 = std::max(worst32, max_rel_error(y32, ref32));
    }
    r.passed = worst64 <= 1e-6 && worst32 <= 1e-6;
    r.detail = std::to_string(cases) + " cases, max rel err " + num(worst64) +
               " (64-bit) / " + num(worst32) + " (32-bit), limit 1e-06";
  });
}

CriterionResult gradient_suite(bool full_model, std::uint64_t seed) {
  return timed(3, "gradient suite", [&](CriterionResult& r) {
    GradCheckOptions opts;
    opts.seed = seed;
    std::vector<GradCheck> all = layer_gradient_checks(opts);
    const std::size_t layers = all.size();
    double model_seconds = 0;
    if (full_model) {
      const auto t0 = Clock::now();
      const auto m = model_gradient_checks(gradcheck_model_config(), opts);
      model_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
      all.insert(all.end(), m.begin(), m.end());
    }
    double worst = 0;
    std::size_t kinks = 0;
    std::string failed;
    for (const auto& g : all) {
      worst = std::max(worst, g.error);
      kinks += g.kinks;
      if (!g.passed && failed.empty()) {
        failed = "; first failure " + g.name + " err " + num(g.error) +
                 " kinks " + std::to_string(g.kinks) + "/" +
                 std::to_string(g.coords);
      }
    }
    r.passed = failed.empty() && model_seconds < 300;
    r.detail = std::to_string(layers) + " layer checks";
    if (full_model) {
      r.detail += " + " + std::to_string(all.size() - layers) +
                  " full-model groups (" + num(model_seconds) + " s)";
    }
    r.detail += ", max rel err " + num(worst) + " (limit 1e-06), " +
                std::to_string(kinks) + " kink coordinates excluded" + failed;
    if (model_seconds >= 300) r.detail += "; full-model check over 300 s";
  });
}

CriterionResult channel_widths() {
  return timed(4, "channel arithmetic at full widths", [&](CriterionResult& r) {
    ModelConfig cfg;  // widths 32/64/128/256, K = 17
    const Model<float> m = Model<float>::zeros(cfg);
    const Tensor image(1, 3, 64, 64, 0.5f);
    const auto pyr = backbone_forward(image, m.backbone, cfg.pyramid);
    const int fused = fuse_pyramid(pyr).c();
    const DWaspWidths wd = cfg.widths();
    const Tensor wf = waterfall_forward(fuse_pyramid(pyr), m.dwasp, cfg.dwasp);
    const int maps = fuse_low_level(pyr.low_level, wf, m.dwasp).c();
    const auto out = dwasp_forward(pyr, m.dwasp, cfg.dwasp);
    r.passed = fused == 480 && wd.fused == 480 && maps == 120 &&
               wd.final_width == 120 && out.heatmaps.c() == 18 &&
               out.offsets.c() == 34;
    r.detail = "fused " + std::to_string(fused) + " (expect 480), features " +
               std::to_string(maps) + " (expect 120), heads " +
               std::to_string(out.heatmaps.c()) + " + " +
               std::to_string(out.offsets.c()) + " (expect 18 + 34)";
  });
}

CriterionResult render_decode_round_trip(int scenes, std::uint64_t seed) {
  return timed(5, "render/decode round trip", [&](CriterionResult& r) {
    Rng rng(seed);
    PeopleParams pp;  // 64 x 64, 1-4 people, centres >= 8 px apart
    const int k = pp.keypoints;
    OksParams op;
    op.falloff.assign(k, 0.1);
    const DecodeConfig dc;
    double worst_oks = 1, worst_err = 0;
    int people = 0, missed = 0, extra = 0;
    for (int s = 0; s < scenes; ++s) {
      const auto anns = synthetic_people(rng, pp);
      DWaspOutput<float> out;
      out.heatmaps = render_keypoint_heatmaps(anns, k, pp.height, pp.width, 3.0);
      out.offsets =
          render_offset_targets(anns, k, pp.height, pp.width).offsets;
      const auto poses = decode_poses(out, dc, op);
      extra += std::max(0, static_cast<int>(poses.size() - anns.size()));
      for (const auto& g : anns) {
        ++people;
        double best = -1, err = INFINITY;
        for (const auto& p : poses) {
          const double o = oks(p, g, op);
          if (o <= best) continue;
          best = o;
          err = 0;
          for (int j = 0; j < k; ++j) {
            err = std::max(err, std::hypot(p.keypoints[j].x - g.keypoints[j].x,
                                           p.keypoints[j].y - g.keypoints[j].y));
          }
        }
        if (best < 0.99 || err > 0.5) ++missed;
        worst_oks = std::min(worst_oks, std::max(best, 0.0));
        worst_err = std::max(worst_err, err);
      }
    }
    r.passed = missed == 0;
    r.detail = std::to_string(scenes) + " scenes, " + std::to_string(people) +
               " people, " + std::to_string(missed) + " not recovered, min OKS " +
               num(worst_oks, 6) + ", max keypoint error " + num(worst_err) +
               " px, " + std::to_string(extra) + " extra detections";
  });
}

CriterionResult oks_closed_forms() {
  return timed(6, "OKS closed forms", [&](CriterionResult& r) {
    Rng rng(6);
    double identical = 0, single = 0;
    for (int t = 0; t < 100; ++t) {
      const int k = pick(rng, 1, 17);
      PersonAnnotation g;
      g.area = rng.uniform(10, 5000);
      OksParams op;
      PoseInstance p;
      for (int j = 0; j < k; ++j) {
        g.keypoints.push_back({rng.uniform(0, 100), rng.uniform(0, 100), 2});
        p.keypoints.push_back({g.keypoints[j].x, g.keypoints[j].y, 1});
        op.falloff.push_back(rng.uniform(0.02, 0.2));
      }
      identical = std::max(identical, std::abs(oks(p, g, op) - 1.0));

      // Only joint j labeled, displaced by exactly s * k_j.
      const int j = pick(rng, 0, k - 1);
      for (int i = 0; i < k; ++i) g.keypoints[i].v = i == j ? 2 : 0;
      const double d = std::sqrt(g.area) * op.falloff[j];
      const double ang = rng.uniform(0, 6.283185307179586);
      p.keypoints[j].x += d * std::cos(ang);
      p.keypoints[j].y += d * std::sin(ang);
      single = std::max(single, std::abs(oks(p, g, op) - std::exp(-0.5)));
    }
    r.passed = identical <= 1e-12 && single <= 1e-9;
    r.detail = "100 cases: identical |OKS - 1| <= " + num(identical) +
               " (limit 1e-12), d = s k |OKS - e^-0.5| <= " + num(single) +
               " (limit 1e-09)";
  });
}

namespace {

// Small random scenes with near-miss predictions, score ties, unlabeled
// joints, mixed areas and crowd indices.
std::vector<ImageEval> fuzz_scene(Rng& rng, int k) {
  std::vector<ImageEval> images(pick(rng, 1, 3));
  int id = 1;
  for (std::size_t i = 0; i < images.size(); ++i) {
    auto& im = images[i];
    im.image_id = static_cast<int>(i) + 1;
    if (rng.uniform() < 0.8) im.crowd_index = std::round(rng.uniform() * 10) / 10;
    const int ngt = pick(rng, 0, 5);
    for (int g = 0; g < ngt; ++g) {
      PersonAnnotation a;
      a.id = id++;
      a.image_id = im.image_id;
      const double cx = rng.uniform(0, 60), cy = rng.uniform(0, 60);
      const double size = rng.uniform(4, 30);
      for (int j = 0; j < k; ++j) {
        const int v = rng.uniform() < 0.15 ? 0 : 2;
        a.keypoints.push_back(
            {cx + rng.uniform(-size, size), cy + rng.uniform(-size, size), v});
      }
      a.area = size * size * rng.uniform(0.5, 2.0);
      im.gts.push_back(a);
    }
    const int npred = pick(rng, 0, 8);
    for (int p = 0; p < npred; ++p) {
      PoseInstance pose;
      pose.score = std::round(rng.uniform() * 5) / 5;  // frequent ties
      if (!im.gts.empty() && rng.uniform() < 0.7) {
        const auto& g = im.gts[rng.below(im.gts.size())];
        const double noise = rng.uniform(0, 4);
        for (const auto& kp : g.keypoints) {
          pose.keypoints.push_back(
              {kp.x + noise * rng.normal(), kp.y + noise * rng.normal(), 1});
        }
      } else {
        for (int j = 0; j < k; ++j) {
          pose.keypoints.push_back({rng.uniform(0, 60), rng.uniform(0, 60), 1});
        }
      }
      im.preds.push_back(pose);
    }
  }
  return images;
}

bool same(const std::optional<double>& a, const std::optional<double>& b) {
  return a.has_value() == b.has_value() && (!a || *a == *b);
}

bool same(const EvalResult& a, const EvalResult& b) {
  bool ok = same(a.ap, b.ap) && same(a.ap50, b.ap50) && same(a.ap75, b.ap75) &&
            same(a.ar, b.ar) && same(a.ap_medium, b.ap_medium) &&
            same(a.ap_large, b.ap_large) && same(a.ar_medium, b.ar_medium) &&
            same(a.ar_large, b.ar_large) && same(a.ap_easy, b.ap_easy) &&
            same(a.ap_medium_crowd, b.ap_medium_crowd) &&
            same(a.ap_hard, b.ap_hard) && a.gt_count == b.gt_count &&
            a.pred_count == b.pred_count;
  for (int j = 0; j < 10; ++j) {
    ok = ok && same(a.ap_per_threshold[j], b.ap_per_threshold[j]);
  }
  return ok;
}

}  // namespace

CriterionResult evaluator_equivalence(int scenes, std::uint64_t seed) {
  return timed(7, "evaluator equivalence", [&](CriterionResult& r) {
    Rng rng(seed);
    const int k = 4;
    int mismatches = 0, defined = 0, first_bad = -1;
    for (int s = 0; s < scenes; ++s) {
      EvalSettings st;
      st.style = s % 2 ? EvalStyle::kCrowdPose : EvalStyle::kCoco;
      st.oks.falloff = {0.08, 0.1, 0.12, 0.15};
      st.max_detections = s % 3 == 0 ? 5 : 20;
      st.area_medium = {0, 200};
      st.area_large = {200, 1e10};
      const auto images = fuzz_scene(rng, k);
      const EvalResult got = evaluate(images, st);
      const EvalResult want = oracle::brute_force_evaluate(images, st);
      defined += got.ap.has_value();
      if (!same(got, want)) {
        ++mismatches;
        if (first_bad < 0) first_bad = s;
      }
    }
    r.passed = mismatches == 0;
    r.detail = std::to_string(scenes) + " scenes (" + std::to_string(defined) +
               " with ground truth), " + std::to_string(mismatches) +
               " differ from the brute-force oracle";
    if (first_bad >= 0) r.detail += ", first at scene " + std::to_string(first_bad);
  });
}

CriterionResult lr_schedule() {
  return timed(8, "learning-rate schedule", [&](CriterionResult& r) {
    const TrainConfig tc;
    const double got[3] = {lr_at_epoch(0, tc), lr_at_epoch(95, tc),
                           lr_at_epoch(125, tc)};
    r.passed = got[0] == 1e-3 && got[1] == 1e-4 && got[2] == 1e-5;
    r.detail = "epochs 0/95/125 -> " + num(got[0]) + ", " + num(got[1]) + ", " +
               num(got[2]) + (r.passed ? " (exact)" : " (expected 0.001, 0.0001, 1e-05)");
  });
}

CriterionResult augmentation(int draws, std::uint64_t seed) {
  return timed(9, "augmentation ranges and keypoint warp", [&](CriterionResult& r) {
    const TrainConfig tc;  // +-30 degrees, scale [0.75, 1.5], +-40 px
    Rng rng(seed);
    int out_of_range = 0;
    double lo_rot = 1e9, hi_rot = -1e9, lo_s = 1e9, hi_s = -1e9, max_t = 0;
    double worst = 0;
    int canvas_errors = 0, warped = 0;
    PeopleParams pp;
    pp.max_people = 2;
    Rng people_rng(seed + 1);
    for (int i = 0; i < draws; ++i) {
      const AffineParams p = sample_affine(rng, tc);
      lo_rot = std::min(lo_rot, p.rotation);
      hi_rot = std::max(hi_rot, p.rotation);
      lo_s = std::min(lo_s, p.scale);
      hi_s = std::max(hi_s, p.scale);
      max_t = std::max({max_t, std::abs(p.tx), std::abs(p.ty)});
      out_of_range += p.rotation < -30 || p.rotation > 30 || p.scale < 0.75 ||
                      p.scale > 1.5 || std::abs(p.tx) > 40 ||
                      std::abs(p.ty) > 40;
      if (i % 100) continue;
      // Warp a scene and compare every keypoint with the oracle.
      TrainSample s;
      s.people = synthetic_people(people_rng, pp);
      s.image = Tensor(1, 3, pp.height, pp.width);
      const TrainSample t = apply_affine(s, affine_matrix(p, pp.width, pp.height));
      for (std::size_t a = 0; a < s.people.size(); ++a) {
        for (std::size_t j = 0; j < s.people[a].keypoints.size(); ++j) {
          const auto& k0 = s.people[a].keypoints[j];
          const auto& k1 = t.people[a].keypoints[j];
          const auto want =
              oracle::transform_point(p, pp.width, pp.height, k0.x, k0.y);
          worst = std::max({worst, std::abs(k1.x - want[0]),
                            std::abs(k1.y - want[1])});
          const bool inside = want[0] >= 0 && want[0] <= pp.width - 1 &&
                              want[1] >= 0 && want[1] <= pp.height - 1;
          canvas_errors += inside != k1.labeled();
          ++warped;
        }
      }
    }
    r.passed = out_of_range == 0 && worst <= 1e-6 && canvas_errors == 0;
    r.detail = std::to_string(draws) + " draws, rotation [" + num(lo_rot) + ", " +
               num(hi_rot) + "], scale [" + num(lo_s) + ", " + num(hi_s) +
               "], max |t| " + num(max_t) + ", " + std::to_string(out_of_range) +
               " out of range; " + std::to_string(warped) +
               " warped keypoints, max error " + num(worst) + ", " +
               std::to_string(canvas_errors) + " visibility errors";
  });
}

std::vector<TrainSample> ToyProblem::dataset() const {
  Rng rng(data_seed);
  return synthetic_dataset(rng, images, people);
}

ToyProblem toy_problem() {
  ToyProblem t;
  t.people.min_people = 2;
  t.people.max_people = 2;
  t.people.keypoints = 5;
  t.people.min_radius = 8;
  t.people.max_radius = 12;
  t.people.min_center_distance = 20;

  ModelConfig& mc = t.config.model;
  mc = gradcheck_model_config(t.people.keypoints);
  // Pyramid widths stay at 4/8/16/32; the module is widened so the offset
  // branch can fit sub-pixel displacements.
  mc.dwasp.branch_width = 32;
  mc.dwasp.waterfall_width = 64;
  mc.dwasp.final_width = 40;
  mc.dwasp.group_width = 8;
  mc.dwasp.head_width = 40;

  TrainConfig& tc = t.config.train;
  tc.epochs = 200;
  tc.lr = 3e-3;
  tc.lr_steps = {150, 180};
  tc.augment = false;
  tc.sigma = 1.5;
  tc.offset_radius = 3;
  tc.offset_weight = 1.0;
  tc.seed = 1;

  t.config.eval.oks.falloff.assign(t.people.keypoints, 0.1);
  t.config.skeleton = synthetic_skeleton(t.people.keypoints);
  return t;
}

namespace {

std::vector<ImageEval> predict_on(const std::vector<TrainSample>& data,
                                  const Model<float>& m, const RunConfig& cfg) {
  std::vector<ImageEval> out;
  for (std::size_t i = 0; i < data.size(); ++i) {
    ImageEval im;
    im.image_id = static_cast<int>(i) + 1;
    im.gts = data[i].people;
    const auto y = model_forward(data[i].image, m, cfg.model);
    for (const auto& p : decode_poses(y, cfg.decode, cfg.eval.oks,
                                      cfg.model.dwasp.offset_mode)) {
      im.preds.push_back(instance_to_image(p, cfg.model.pyramid.base_stride));
    }
    out.push_back(std::move(im));
  }
  return out;
}

}  // namespace

CriterionResult toy_overfit(const ToyProblem& toy) {
  return timed(10, "toy overfit", [&](CriterionResult& r) {
    const auto data = toy.dataset();
    const RunConfig& cfg = toy.config;
    TrainState st{init_model<float>(cfg.model, toy.model_seed), {}, 0};
    double first = 0, last = 0;
    train_loop(data, st, cfg.model, cfg.train,
               [&](const EpochLog& e, const TrainState&) {
                 if (e.epoch == 1) first = e.total;
                 last = e.total;
               });
    const EvalResult ev = evaluate(predict_on(data, st.model, cfg), cfg.eval);
    const double ap75 = ev.ap_per_threshold[5].value_or(0);
    const double ratio = last > 0 ? first / last : INFINITY;
    r.passed = ratio >= 100 && ap75 == 1.0;
    r.detail = std::to_string(cfg.train.epochs) + " epochs, loss " +
               num(first, 4) + " -> " + num(last, 4) + " (x" + num(ratio) +
               ", need >= 100), AP@0.75 " + num(ap75, 4) + " (need 1), AP " +
               num(ev.ap.value_or(0), 4);
  }, 600);
}

CriterionResult determinism(const ToyProblem& toy, int epochs) {
  return timed(11, "training determinism", [&](CriterionResult& r) {
    const auto data = toy.dataset();
    RunConfig cfg = toy.config;
    cfg.train.epochs = epochs;
    cfg.train.augment = true;
    std::string bytes[2];
    for (auto& b : bytes) {
      TrainState st{init_model<float>(cfg.model, toy.model_seed), {}, 0};
      train_loop(data, st, cfg.model, cfg.train);
      b = save_checkpoint({st.model, st.optim, st.epoch}, cfg.model);
    }
    r.passed = bytes[0] == bytes[1];
    r.detail = "two " + std::to_string(epochs) + "-epoch runs, checkpoints of " +
               std::to_string(bytes[0].size()) + " bytes " +
               (r.passed ? "identical" : "differ");
  });
}

CriterionResult format_round_trips(std::uint64_t seed) {
  return timed(12, "format round trips", [&](CriterionResult& r) {
    Rng rng(seed);
    std::vector<std::string> failures;
    auto expect = [&](bool ok, const std::string& what) {
      if (!ok) failures.push_back(what);
    };

    // Tensor dump, including odd extents and an empty tensor.
    for (const Shape s : {Shape{1, 1, 1, 1}, Shape{2, 3, 5, 7}, Shape{1, 0, 4, 4}}) {
      const Tensor t = oracle::random_tensor<float>(s, rng);
      const std::string a = write_tensor(t);
      const Tensor back = read_tensor(a);
      expect(back == t && write_tensor(back) == a, "tensor " + s.str());
    }

    // Checkpoint with non-trivial optimizer state.
    const ToyProblem toy = toy_problem();
    const ModelConfig& mc = toy.config.model;
    Checkpoint c{init_model<float>(mc, seed), {}, 7};
    c.optim = OptimState::zeros_like(c.model);
    c.optim.step = 123;
    for (auto& t : c.optim.m) t = oracle::random_tensor<float>(t.shape(), rng);
    for (auto& t : c.optim.v) t = oracle::random_tensor<float>(t.shape(), rng);
    const std::string ck = save_checkpoint(c, mc);
    expect(save_checkpoint(load_checkpoint(ck, mc), mc) == ck, "checkpoint");

    // Annotations from a synthetic set, with a crowd index and an
    // unlabeled joint.
    Dataset d;
    const auto samples = toy.dataset();
    for (std::size_t i = 0; i < samples.size(); ++i) {
      ImageRecord rec{static_cast<int>(i) + 1,
                      "img" + std::to_string(i + 1) + ".ppm", 64, 64, {}};
      if (i % 2) rec.crowd_index = 0.25 * static_cast<double>(i % 4);
      d.images.push_back(rec);
      for (const auto& p : samples[i].people) d.annotations.push_back(p);
    }
    d.annotations[0].keypoints[1] = {0, 0, 0};
    for (int k = 0; k < toy.people.keypoints; ++k) {
      d.keypoint_names.push_back("joint" + std::to_string(k));
    }
    d.skeleton = synthetic_skeleton(toy.people.keypoints);
    const std::string ann = serialize_annotations(d);
    expect(serialize_annotations(parse_annotations(ann)) == ann, "annotations");

    // Results.
    std::vector<ImageResult> res;
    for (int i = 0; i < 6; ++i) {
      ImageResult ir;
      ir.image_id = 1 + i / 2;
      ir.pose.score = rng.uniform();
      for (int k = 0; k < 5; ++k) {
        ir.pose.keypoints.push_back(
            {rng.uniform(-5, 70), rng.uniform(-5, 70), rng.uniform()});
      }
      res.push_back(ir);
    }
    const std::string rs = serialize_results(res);
    expect(serialize_results(parse_results(rs, 5)) == rs, "results");

    // Images and configuration text as well.
    const Tensor img = samples[0].image;
    const std::string ppm = write_image_ppm(img);
    expect(write_image_ppm(read_image_ppm(ppm)) == ppm, "ppm image");
    const std::string cfg = canonical_config(toy.config);
    expect(canonical_config(parse_run_config(cfg)) == cfg, "config");

    r.passed = failures.empty();
    r.detail = "tensor dumps, checkpoint (" + std::to_string(ck.size()) +
               " bytes), annotations, results, ppm, config: ";
    if (failures.empty()) {
      r.detail += "all bitwise stable";
    } else {
      for (const auto& f : failures) r.detail += f + " ";
      r.detail += "changed";
    }
  });
}

}  // namespace bapose::check
