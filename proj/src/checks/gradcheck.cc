#include "bapose/checks/gradcheck.h"

#include <algorithm>
#include <cmath>

#include "bapose/adaptive_conv.h"
#include "bapose/checks/oracles.h"
#include "bapose/ops.h"
#include "bapose/train.h"

namespace bapose::check {

GradCheck compare_coords(const std::string& name,
                         std::span<const double> analytic,
                         const std::function<double(std::size_t, double)>& f,
                         const GradCheckOptions& opts) {
  GradCheck r;
  r.name = name;
  r.coords = analytic.size();
  const double h = opts.step;
  double a2 = 0, amax = 0;
  for (double v : analytic) {
    a2 += v * v;
    amax = std::max(amax, std::abs(v));
  }
  const double bad = opts.tolerance * std::sqrt(a2);

  const double f0 = analytic.empty() ? 0.0 : f(0, 0.0);
  std::vector<double> num, ana;
  num.reserve(analytic.size());
  ana.reserve(analytic.size());
  for (std::size_t j = 0; j < analytic.size(); ++j) {
    const double up = f(j, h);
    const double down = f(j, -h);
    const double central = (up - down) / (2 * h);
    const double a = analytic[j];
    if (std::abs(central - a) > bad && bad > 0) {
      // A kink inside the step leaves one one-sided slope intact.
      const double fwd = (up - f0) / h, bwd = (f0 - down) / h;
      const double side = std::min(std::abs(fwd - a), std::abs(bwd - a));
      if (side < 1e-3 * amax && std::abs(fwd - bwd) > std::abs(central - a)) {
        ++r.kinks;
        continue;
      }
    }
    num.push_back(central);
    ana.push_back(a);
  }
  r.error = norm_rel_error(std::span<const double>(num),
                           std::span<const double>(ana));
  r.passed = r.error <= opts.tolerance &&
             static_cast<double>(r.kinks) <= 0.01 * static_cast<double>(r.coords);
  return r;
}

GradCheck compare_gradient(const std::string& name,
                           const std::function<double(const Tensor64&)>& f,
                           const Tensor64& x, const Tensor64& analytic,
                           const GradCheckOptions& opts) {
  if (analytic.shape() != x.shape()) {
    GradCheck r;
    r.name = name;
    r.coords = x.size();
    r.error = INFINITY;
    return r;
  }
  Tensor64 probe = x;
  return compare_coords(
      name, analytic.values(),
      [&](std::size_t j, double delta) {
        probe[j] = x[j] + delta;
        const double v = f(probe);
        probe[j] = x[j];
        return v;
      },
      opts);
}

namespace {

using oracle::dot;
using oracle::random_tensor;

// Checks the tensors of a weight set whose names start with one of the
// prefixes. loss(weights) must be the scalar whose gradient is `grads`.
// group_of maps a tensor name to the label its coordinates are pooled
// under; by default every tensor is its own group.
template <typename W>
void check_weights(std::vector<GradCheck>& out, const std::string& label,
                   const W& weights, const W& grads,
                   const std::function<double(const W&)>& loss,
                   const std::vector<std::string>& prefixes,
                   const GradCheckOptions& opts,
                   const std::function<std::string(const std::string&)>&
                       group_of = {}) {
  W work = weights;
  struct Coord {
    Tensor64* slot;
    std::size_t index;
  };
  std::vector<std::string> order;
  std::vector<std::vector<Coord>> coords;
  std::vector<std::vector<double>> analytic;
  std::vector<const Tensor64*> g;
  grads.visit([&](const std::string&, const Tensor64& t) { g.push_back(&t); });
  std::size_t i = 0;
  work.visit([&](const std::string& name, Tensor64& t) {
    const Tensor64& gt = *g[i++];
    const bool wanted =
        prefixes.empty() ||
        std::any_of(prefixes.begin(), prefixes.end(), [&](const auto& p) {
          return name.rfind(p, 0) == 0;
        });
    if (!wanted) return;
    const std::string group = group_of ? group_of(name) : name;
    auto it = std::find(order.begin(), order.end(), group);
    const std::size_t k = static_cast<std::size_t>(it - order.begin());
    if (it == order.end()) {
      order.push_back(group);
      coords.emplace_back();
      analytic.emplace_back();
    }
    for (std::size_t j = 0; j < t.size(); ++j) {
      coords[k].push_back({&t, j});
      analytic[k].push_back(gt[j]);
    }
  });
  for (std::size_t k = 0; k < order.size(); ++k) {
    out.push_back(compare_coords(
        label + ":" + order[k], analytic[k],
        [&](std::size_t j, double delta) {
          double& v = (*coords[k][j].slot)[coords[k][j].index];
          const double original = v;
          v = original + delta;
          const double l = loss(work);
          v = original;
          return l;
        },
        opts));
  }
}

// Probe-weighted sum over every tensor of a pyramid.
double pyramid_dot(const FeaturePyramid<double>& r,
                   const FeaturePyramid<double>& p) {
  double acc = dot(r.low_level, p.low_level);
  for (int l = 0; l < 4; ++l) acc += dot(r.levels[l], p.levels[l]);
  return acc;
}

FeaturePyramid<double> random_pyramid(const PyramidConfig& cfg, int base,
                                      Rng& rng, int n = 1) {
  FeaturePyramid<double> p;
  for (int l = 0; l < 4; ++l) {
    const int s = base >> l;
    p.levels[l] = random_tensor<double>({n, cfg.widths[l], s, s}, rng);
  }
  p.low_level = random_tensor<double>({n, cfg.stem_width, base, base}, rng);
  return p;
}

void kernel_checks(std::vector<GradCheck>& out, Rng& rng,
                   const GradCheckOptions& o) {
  // conv2d, strided and dilated
  for (const ConvSpec spec : {ConvSpec{3, 3, 2, 1, 1}, ConvSpec::same3x3(2)}) {
    const Tensor64 x = random_tensor<double>({2, 3, 7, 6}, rng);
    const Tensor64 w = random_tensor<double>({2, 3, 3, 3}, rng);
    const Tensor64 b = random_tensor<double>({1, 2, 1, 1}, rng);
    const Tensor64 r =
        random_tensor<double>({2, 2, spec.out_h(7), spec.out_w(6)}, rng);
    const auto g = conv2d_backward(x, w, spec, r);
    const std::string tag = "conv2d(s" + std::to_string(spec.stride) + ",d" +
                            std::to_string(spec.dilation) + ")";
    out.push_back(compare_gradient(
        tag + ":x",
        [&](const Tensor64& v) {
          return dot(r, conv2d(v, w, std::span<const double>(b.values()), spec));
        },
        x, g.dx, o));
    out.push_back(compare_gradient(
        tag + ":w",
        [&](const Tensor64& v) {
          return dot(r, conv2d(x, v, std::span<const double>(b.values()), spec));
        },
        w, g.dw, o));
    out.push_back(compare_gradient(
        tag + ":b",
        [&](const Tensor64& v) {
          return dot(r, conv2d(x, w, std::span<const double>(v.values()), spec));
        },
        b, Tensor64(b.shape(), g.db), o));
  }

  {
    const Tensor64 x = random_tensor<double>({2, 3, 4, 5}, rng);
    const Tensor64 r = random_tensor<double>({2, 3, 1, 1}, rng);
    out.push_back(compare_gradient(
        "global_avg_pool:x",
        [&](const Tensor64& v) { return dot(r, global_avg_pool(v)); }, x,
        global_avg_pool_backward(x.shape(), r), o));
  }

  for (auto [h, w] : {std::pair{9, 7}, {2, 3}}) {
    const Tensor64 x = random_tensor<double>({1, 2, 4, 5}, rng);
    const Tensor64 r = random_tensor<double>({1, 2, h, w}, rng);
    out.push_back(compare_gradient(
        "bilinear_resize(" + std::to_string(h) + "x" + std::to_string(w) +
            "):x",
        [&](const Tensor64& v) { return dot(r, bilinear_resize(v, h, w)); }, x,
        bilinear_resize_backward(x.shape(), r), o));
  }

  {
    const Tensor64 x = random_tensor<double>({1, 2, 5, 6}, rng);
    const int count = 30;
    Tensor64 pos(1, 2, 1, count);
    std::vector<double> r(count);
    for (int i = 0; i < count; ++i) {
      pos(0, 0, 0, i) = rng.uniform(-1.5, 5.5);
      pos(0, 1, 0, i) = rng.uniform(-1.5, 6.5);
      r[i] = rng.normal();
    }
    auto points = [&](const Tensor64& p) {
      std::vector<SamplePoint> pts;
      for (int i = 0; i < count; ++i) {
        pts.push_back({0, i % 2, p(0, 0, 0, i), p(0, 1, 0, i)});
      }
      return pts;
    };
    auto probe = [&](const Tensor64& v, const Tensor64& p) {
      const auto pts = points(p);
      const auto s = bilinear_sample(v, std::span<const SamplePoint>(pts));
      double acc = 0;
      for (int i = 0; i < count; ++i) acc += r[i] * s[i];
      return acc;
    };
    const auto pts = points(pos);
    const auto g = bilinear_sample_backward(
        x, std::span<const SamplePoint>(pts), std::span<const double>(r));
    Tensor64 dpos(pos.shape());
    for (int i = 0; i < count; ++i) {
      dpos(0, 0, 0, i) = g.drow[i];
      dpos(0, 1, 0, i) = g.dcol[i];
    }
    out.push_back(compare_gradient(
        "bilinear_sample:x", [&](const Tensor64& v) { return probe(v, pos); },
        x, g.dx, o));
    out.push_back(compare_gradient(
        "bilinear_sample:position",
        [&](const Tensor64& p) { return probe(x, p); }, pos, dpos, o));
  }

  {
    const Tensor64 a = random_tensor<double>({1, 2, 3, 3}, rng);
    const Tensor64 b = random_tensor<double>({1, 3, 3, 3}, rng);
    const Tensor64 r = random_tensor<double>({1, 5, 3, 3}, rng);
    const std::vector<int> widths{2, 3};
    const auto parts = split_channels(r, std::span<const int>(widths));
    out.push_back(compare_gradient(
        "concat_channels:first",
        [&](const Tensor64& v) { return dot(r, concat_channels<double>({&v, &b})); },
        a, parts[0], o));
    out.push_back(compare_gradient(
        "concat_channels:second",
        [&](const Tensor64& v) { return dot(r, concat_channels<double>({&a, &v})); },
        b, parts[1], o));
  }

  {
    const Tensor64 x = random_tensor<double>({1, 3, 4, 4}, rng, 3.0);
    const Tensor64 r = random_tensor<double>(x.shape(), rng);
    out.push_back(compare_gradient(
        "sigmoid:x", [&](const Tensor64& v) { return dot(r, sigmoid(v)); }, x,
        sigmoid_backward(sigmoid(x), r), o));
    out.push_back(compare_gradient(
        "relu:x", [&](const Tensor64& v) { return dot(r, relu(v)); }, x,
        relu_backward(relu(x), r), o));
  }
}

void adaptive_checks(std::vector<GradCheck>& out, Rng& rng,
                     const GradCheckOptions& o) {
  const Tensor64 x = random_tensor<double>({2, 3, 5, 6}, rng);
  const Tensor64 w = random_tensor<double>({4, 3, 3, 3}, rng);
  const Tensor64 b = random_tensor<double>({1, 4, 1, 1}, rng);
  // Canonical grid plus a non-integer displacement keeps every tap off the
  // pixel lattice, where bilinear sampling is not differentiable.
  Tensor64 off = canonical_offsets<double>(2, 5, 6);
  for (double& v : off.values()) v += rng.uniform(0.1, 0.9) * (rng.uniform() < 0.5 ? -1 : 1);
  const Tensor64 r = random_tensor<double>({2, 4, 5, 6}, rng);
  const auto g = adaptive_conv_backward(x, w, off, r);
  auto run = [&](const Tensor64& xx, const Tensor64& ww, const Tensor64& bb,
                 const Tensor64& oo) {
    return dot(r, adaptive_conv(xx, ww, std::span<const double>(bb.values()), oo));
  };
  out.push_back(compare_gradient(
      "adaptive_conv:x", [&](const Tensor64& v) { return run(v, w, b, off); },
      x, g.dx, o));
  out.push_back(compare_gradient(
      "adaptive_conv:w", [&](const Tensor64& v) { return run(x, v, b, off); },
      w, g.dw, o));
  out.push_back(compare_gradient(
      "adaptive_conv:b", [&](const Tensor64& v) { return run(x, w, v, off); },
      b, Tensor64(b.shape(), g.db), o));
  out.push_back(compare_gradient(
      "adaptive_conv:offsets",
      [&](const Tensor64& v) { return run(x, w, b, v); }, off, g.doffsets, o));

  // Offset prediction: affine parameters from a 1x1 convolution.
  const Tensor64 feat = random_tensor<double>({1, 4, 3, 4}, rng);
  ConvParams<double> pred{random_tensor<double>({6, 4, 1, 1}, rng, 0.3),
                          random_tensor<double>({1, 6, 1, 1}, rng)};
  const Tensor64 rr = random_tensor<double>({1, kOffsetChannels, 3, 4}, rng);
  ConvParams<double> gp = ConvParams<double>::zeros(6, 4, 1, 1);
  const Tensor64 dfeat = predict_offsets_backward(feat, pred, rr, gp);
  out.push_back(compare_gradient(
      "predict_offsets:features",
      [&](const Tensor64& v) { return dot(rr, predict_offsets(v, pred)); },
      feat, dfeat, o));
  out.push_back(compare_gradient(
      "predict_offsets:w",
      [&](const Tensor64& v) {
        ConvParams<double> p = pred;
        p.w = v;
        return dot(rr, predict_offsets(feat, p));
      },
      pred.w, gp.w, o));
  out.push_back(compare_gradient(
      "predict_offsets:b",
      [&](const Tensor64& v) {
        ConvParams<double> p = pred;
        p.b = v;
        return dot(rr, predict_offsets(feat, p));
      },
      pred.b, gp.b, o));
}

void module_checks(std::vector<GradCheck>& out, Rng& rng,
                   const GradCheckOptions& o) {
  ModelConfig cfg = gradcheck_model_config(3);
  cfg.pyramid.blocks = 2;  // exercise the stride-1 extra blocks as well
  const Model<double> m = random_model(cfg, rng.next());
  const auto& pc = cfg.pyramid;

  // Backbone: image and every weight.
  {
    const Tensor64 image = random_tensor<double>({1, 3, 32, 32}, rng);
    BackboneTrace<double> trace;
    const auto pyr = backbone_forward(image, m.backbone, pc, &trace);
    FeaturePyramid<double> r;
    for (int l = 0; l < 4; ++l) {
      r.levels[l] = random_tensor<double>(pyr.levels[l].shape(), rng);
    }
    r.low_level = random_tensor<double>(pyr.low_level.shape(), rng);
    auto grad = BackboneWeights<double>::zeros(pc);
    const Tensor64 dimage = backbone_backward(trace, m.backbone, r, grad);
    out.push_back(compare_gradient(
        "backbone:image",
        [&](const Tensor64& v) {
          return pyramid_dot(r, backbone_forward(v, m.backbone, pc));
        },
        image, dimage, o));
    check_weights<BackboneWeights<double>>(
        out, "backbone", m.backbone, grad,
        [&](const BackboneWeights<double>& w) {
          return pyramid_dot(r, backbone_forward(image, w, pc));
        },
        {}, o);
  }

  const auto wd = cfg.widths();
  const auto& dw = m.dwasp;

  // Pyramid fusion.
  {
    const auto p = random_pyramid(pc, 8, rng);
    const Tensor64 r = random_tensor<double>({1, pc.fused_width(), 8, 8}, rng);
    const auto d = fuse_pyramid_backward(p, r);
    for (int l = 0; l < 4; ++l) {
      out.push_back(compare_gradient(
          "fuse_pyramid:level" + std::to_string(l),
          [&](const Tensor64& v) {
            auto q = p;
            q.levels[l] = v;
            return dot(r, fuse_pyramid(q));
          },
          p.levels[l], d.levels[l], o));
    }
  }

  // Waterfall.
  {
    const Tensor64 g0 = random_tensor<double>({1, wd.fused, 8, 8}, rng);
    WaterfallTrace<double> t;
    const Tensor64 y = waterfall_forward(g0, dw, cfg.dwasp, &t);
    const Tensor64 r = random_tensor<double>(y.shape(), rng);
    auto grad = DWaspWeights<double>::zeros(wd);
    const Tensor64 dg0 = waterfall_backward(t, dw, cfg.dwasp, r, grad);
    out.push_back(compare_gradient(
        "waterfall:g0",
        [&](const Tensor64& v) {
          return dot(r, waterfall_forward(v, dw, cfg.dwasp));
        },
        g0, dg0, o));
    check_weights<DWaspWeights<double>>(
        out, "waterfall", dw, grad,
        [&](const DWaspWeights<double>& w) {
          return dot(r, waterfall_forward(g0, w, cfg.dwasp));
        },
        {"dwasp.branch", "dwasp.pool", "dwasp.waterfall"}, o);
  }

  // Low-level fusion.
  {
    const Tensor64 llf = random_tensor<double>({1, wd.low_level, 8, 8}, rng);
    const Tensor64 wf = random_tensor<double>({1, wd.waterfall, 8, 8}, rng);
    LowLevelTrace<double> t;
    const Tensor64 y = fuse_low_level(llf, wf, dw, &t);
    const Tensor64 r = random_tensor<double>(y.shape(), rng);
    auto grad = DWaspWeights<double>::zeros(wd);
    const auto d = fuse_low_level_backward(t, dw, r, grad);
    out.push_back(compare_gradient(
        "low_level:features",
        [&](const Tensor64& v) { return dot(r, fuse_low_level(v, wf, dw)); },
        llf, d.dlow_level, o));
    out.push_back(compare_gradient(
        "low_level:waterfall",
        [&](const Tensor64& v) { return dot(r, fuse_low_level(llf, v, dw)); },
        wf, d.dwaterfall, o));
    check_weights<DWaspWeights<double>>(
        out, "low_level", dw, grad,
        [&](const DWaspWeights<double>& w) {
          return dot(r, fuse_low_level(llf, wf, w));
        },
        {"dwasp.low_level", "dwasp.fuse", "dwasp.reduce"}, o);
  }

  // Heads, in both offset layouts.
  for (OffsetMode mode : {OffsetMode::kPerKeypoint, OffsetMode::kShared}) {
    ModelConfig hc = cfg;
    hc.dwasp.offset_mode = mode;
    const Model<double> hm = random_model(hc, rng.next());
    const auto hw = hc.widths();
    const Tensor64 feat = random_tensor<double>({1, hw.final_width, 6, 7}, rng);
    HeadsTrace<double> t;
    const auto y = heads_forward(feat, hm.dwasp, &t);
    DWaspOutput<double> r{random_tensor<double>(y.heatmaps.shape(), rng),
                          random_tensor<double>(y.offsets.shape(), rng)};
    auto probe = [&](const DWaspOutput<double>& v) {
      return dot(r.heatmaps, v.heatmaps) + dot(r.offsets, v.offsets);
    };
    auto grad = DWaspWeights<double>::zeros(hw);
    const Tensor64 dfeat = heads_backward(t, hm.dwasp, r, grad);
    const std::string tag = "heads(" + to_string(mode) + ")";
    out.push_back(compare_gradient(
        tag + ":features",
        [&](const Tensor64& v) { return probe(heads_forward(v, hm.dwasp)); },
        feat, dfeat, o));
    check_weights<DWaspWeights<double>>(
        out, tag, hm.dwasp, grad,
        [&](const DWaspWeights<double>& w) {
          return probe(heads_forward(feat, w));
        },
        {"heads."}, o);
  }

  // Whole module w.r.t. its pyramid input.
  {
    const auto p = random_pyramid(pc, 8, rng);
    DWaspTrace<double> t;
    const auto y = dwasp_forward(p, dw, cfg.dwasp, &t);
    DWaspOutput<double> r{random_tensor<double>(y.heatmaps.shape(), rng),
                          random_tensor<double>(y.offsets.shape(), rng)};
    auto probe = [&](const FeaturePyramid<double>& q) {
      const auto v = dwasp_forward(q, dw, cfg.dwasp);
      return dot(r.heatmaps, v.heatmaps) + dot(r.offsets, v.offsets);
    };
    auto grad = DWaspWeights<double>::zeros(wd);
    const auto d = dwasp_backward(t, dw, cfg.dwasp, r, grad);
    for (int l = 0; l < 4; ++l) {
      out.push_back(compare_gradient(
          "dwasp:level" + std::to_string(l),
          [&](const Tensor64& v) {
            auto q = p;
            q.levels[l] = v;
            return probe(q);
          },
          p.levels[l], d.levels[l], o));
    }
    out.push_back(compare_gradient(
        "dwasp:low_level",
        [&](const Tensor64& v) {
          auto q = p;
          q.low_level = v;
          return probe(q);
        },
        p.low_level, d.low_level, o));
  }
}

void loss_checks(std::vector<GradCheck>& out, Rng& rng,
                 const GradCheckOptions& o) {
  const Tensor64 pred = random_tensor<double>({1, 4, 5, 5}, rng);
  Tensor64 target(pred.shape());
  for (double& v : target.values()) v = rng.uniform();
  out.push_back(compare_gradient(
      "heatmap_loss:pred",
      [&](const Tensor64& v) { return heatmap_loss(v, target).value; }, pred,
      heatmap_loss(pred, target).grad, o));

  // Errors on both sides of the quadratic/linear switch.
  const Tensor64 opred = random_tensor<double>({1, 6, 5, 5}, rng, 3.0);
  const Tensor64 otarget = random_tensor<double>(opred.shape(), rng, 3.0);
  Tensor64 mask(opred.shape()), norm(1, 1, 5, 5);
  for (double& v : mask.values()) v = rng.uniform() < 0.6 ? 1.0 : 0.0;
  for (double& v : norm.values()) v = rng.uniform(0.5, 4.0);
  out.push_back(compare_gradient(
      "offset_loss:pred",
      [&](const Tensor64& v) {
        return offset_loss(v, otarget, mask, norm).value;
      },
      opred, offset_loss(opred, otarget, mask, norm).grad, o));
}

}  // namespace

std::vector<GradCheck> layer_gradient_checks(const GradCheckOptions& opts) {
  Rng rng(opts.seed);
  std::vector<GradCheck> out;
  kernel_checks(out, rng, opts);
  adaptive_checks(out, rng, opts);
  module_checks(out, rng, opts);
  loss_checks(out, rng, opts);
  return out;
}

std::string parameter_group(const std::string& name) {
  // backbone.stem / backbone.levelN, dwasp, heads.kp, heads.off
  const auto first = name.find('.');
  const auto second = name.find('.', first + 1);
  if (name.rfind("dwasp.", 0) == 0) return "dwasp";
  return name.substr(0, second);
}

ModelConfig gradcheck_model_config(int keypoints) {
  ModelConfig c;
  c.pyramid.widths = {4, 8, 16, 32};
  c.pyramid.stem_width = 8;
  c.pyramid.base_stride = 4;
  c.pyramid.blocks = 1;
  c.dwasp.branch_width = 4;
  c.dwasp.waterfall_width = 12;
  c.dwasp.final_width = 6;
  c.dwasp.keypoints = keypoints;
  c.dwasp.group_width = 2;
  c.dwasp.head_width = 6;
  return c;
}

Model<double> random_model(const ModelConfig& cfg, std::uint64_t seed) {
  Model<double> m = init_model<double>(cfg, seed);
  Rng rng(seed ^ 0x5bd1e995ULL);
  m.visit([&](const std::string& name, Tensor64& t) {
    const bool predictor = name.find("predictor") != std::string::npos;
    const bool bias = name.size() > 2 && name.compare(name.size() - 2, 2, ".b") == 0;
    if (predictor && bias) {
      // Identity transform plus a fractional shift and a mild distortion.
      for (int i = 0; i < 6; ++i) {
        t[i] = (i == 0 || i == 3 ? 1.0 : 0.0) + rng.uniform(-0.35, 0.35);
      }
      t[4] += 0.3;
      t[5] -= 0.2;
    } else if (predictor) {
      for (double& v : t.values()) v = 0.05 * rng.normal();
    } else if (name == "dwasp.pool.b") {
      // Keep the pooled branch alive so its gradient is exercised.
      for (double& v : t.values()) v = 0.2 + 0.1 * std::abs(rng.normal());
    } else if (bias) {
      for (double& v : t.values()) v = 0.1 * rng.normal();
    }
  });
  return m;
}

std::vector<GradCheck> model_gradient_checks(const ModelConfig& cfg,
                                             const GradCheckOptions& opts) {
  Rng rng(opts.seed + 7);
  const Model<double> m = random_model(cfg, rng.next());
  const int side = 8 * cfg.pyramid.base_stride;  // 8 x 8 base resolution
  const Tensor64 image = random_tensor<double>({1, 3, side, side}, rng, 0.5);

  ModelTrace<double> trace;
  const auto y = model_forward(image, m, cfg, &trace);
  TrainingTargets<double> targets;
  targets.heatmaps = Tensor64(y.heatmaps.shape());
  for (double& v : targets.heatmaps.values()) v = rng.uniform();
  targets.offsets = random_tensor<double>(y.offsets.shape(), rng, 3.0);
  targets.mask = Tensor64(y.offsets.shape());
  for (double& v : targets.mask.values()) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
  targets.norm = Tensor64(Shape{1, 1, y.offsets.h(), y.offsets.w()});
  for (double& v : targets.norm.values()) v = rng.uniform(0.5, 2.0);
  TrainConfig tc;  // loss weights 1.0 / 0.03

  DWaspOutput<double> dout;
  total_loss(y, targets, tc, &dout);
  Model<double> grad = Model<double>::zeros(cfg);
  const Tensor64 dimage = model_backward(trace, m, cfg, dout, grad);

  auto loss = [&](const Tensor64& img, const Model<double>& w) {
    return total_loss(model_forward(img, w, cfg), targets, tc,
                      static_cast<DWaspOutput<double>*>(nullptr))
        .total;
  };
  std::vector<GradCheck> out;
  check_weights<Model<double>>(
      out, "model", m, grad,
      [&](const Model<double>& w) { return loss(image, w); }, {}, opts,
      parameter_group);
  out.push_back(compare_gradient(
      "model:image", [&](const Tensor64& v) { return loss(v, m); }, image,
      dimage, opts));
  return out;
}

}  // namespace bapose::check
