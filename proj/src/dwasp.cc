#include "bapose/dwasp.h"

#include <sstream>

namespace bapose {

std::string to_string(OffsetMode m) {
  return m == OffsetMode::kShared ? "shared" : "per_keypoint";
}

OffsetMode parse_offset_mode(const std::string& s) {
  if (s == "per_keypoint") return OffsetMode::kPerKeypoint;
  if (s == "shared") return OffsetMode::kShared;
  throw ConfigError("offset mode must be 'per_keypoint' or 'shared', got '" +
                    s + "'");
}

DWaspWidths resolve_widths(const DWaspConfig& cfg, const PyramidConfig& pyr) {
  pyr.validate();
  auto fail = [](const std::string& msg) { throw ConfigError("dwasp: " + msg); };
  for (int d : cfg.dilations) {
    if (d < 1) fail("dilation rates must be positive");
  }
  if (cfg.branch_width < 1) fail("branch_width must be positive");
  if (cfg.keypoints < 1) fail("keypoints must be positive");
  if (cfg.waterfall_width < 0 || cfg.final_width < 0 || cfg.group_width < 0 ||
      cfg.head_width < 0) {
    fail("widths must be non-negative (0 selects the default)");
  }

  DWaspWidths w;
  w.fused = pyr.fused_width();
  w.branch = cfg.branch_width;
  w.pool = cfg.branch_width;
  w.concat = 4 * w.branch + w.pool;
  w.waterfall = cfg.waterfall_width > 0 ? cfg.waterfall_width : w.fused;
  w.low_level = pyr.stem_width;
  w.final_width = cfg.final_width > 0 ? cfg.final_width : w.fused / 4;
  if (w.final_width < 1) {
    fail("final width resolves to 0 (fused width " + std::to_string(w.fused) +
         " < 4)");
  }
  const bool per_kp = cfg.offset_mode == OffsetMode::kPerKeypoint;
  if (per_kp && w.final_width < cfg.keypoints) {
    std::ostringstream os;
    os << "final width " << w.final_width << " is smaller than the keypoint "
       << "count " << cfg.keypoints
       << "; cannot form one regression group per keypoint";
    fail(os.str());
  }
  w.head = cfg.head_width > 0 ? cfg.head_width : w.final_width;
  w.groups = per_kp ? cfg.keypoints : 1;
  w.group = cfg.group_width > 0 ? cfg.group_width : w.final_width / w.groups;
  w.heatmaps = cfg.keypoints + (cfg.center_map ? 1 : 0);
  w.offsets = per_kp ? 2 * cfg.keypoints : 2;
  return w;
}

template <typename T>
DWaspWeights<T> DWaspWeights<T>::zeros(const DWaspWidths& wd) {
  using P = ConvParams<T>;
  DWaspWeights<T> w;
  for (int i = 0; i < 4; ++i) {
    w.branches[i] = P::zeros(wd.branch, i == 0 ? wd.fused : wd.branch, 3, 3);
  }
  w.pool = P::zeros(wd.pool, wd.fused, 1, 1);
  w.waterfall = P::zeros(wd.waterfall, wd.concat, 1, 1);
  w.low_level = P::zeros(wd.waterfall, wd.low_level, 1, 1);
  w.fuse = P::zeros(wd.waterfall, wd.waterfall, 1, 1);
  w.reduce = P::zeros(wd.final_width, wd.waterfall, 1, 1);
  w.kp_predictor = P::zeros(kAffineParams, wd.final_width, 1, 1);
  w.kp_adapt = P::zeros(wd.head, wd.final_width, 3, 3);
  w.kp_out = P::zeros(wd.heatmaps, wd.head, 1, 1);
  w.off_expand = P::zeros(wd.groups * wd.group, wd.final_width, 1, 1);
  w.off_groups.resize(wd.groups);
  for (auto& g : w.off_groups) {
    g.predictor = P::zeros(kAffineParams, wd.group, 1, 1);
    g.adapt = P::zeros(wd.group, wd.group, 3, 3);
    g.out = P::zeros(2, wd.group, 1, 1);
  }
  return w;
}

// ---- pyramid fusion -------------------------------------------------------

template <typename T>
BasicTensor<T> fuse_pyramid(const FeaturePyramid<T>& p) {
  const int h = p.levels[0].h(), w = p.levels[0].w();
  std::vector<BasicTensor<T>> parts;
  parts.push_back(p.levels[0]);
  for (int i = 1; i < 4; ++i) {
    const auto& f = p.levels[i];
    if (f.c() == 0) continue;
    if (f.n() != p.levels[0].n()) {
      throw ShapeError("fuse_pyramid: batch mismatch at level " +
                       std::to_string(i));
    }
    parts.push_back(bilinear_resize(f, h, w));
  }
  return concat_channels<T>(std::span<const BasicTensor<T>>(parts));
}

template <typename T>
FeaturePyramid<T> fuse_pyramid_backward(const FeaturePyramid<T>& p,
                                        const BasicTensor<T>& dg0) {
  const std::vector<int> widths{p.levels[0].c(), p.levels[1].c(),
                                p.levels[2].c(), p.levels[3].c()};
  auto parts = split_channels(dg0, std::span<const int>(widths));
  FeaturePyramid<T> d;
  for (int i = 0; i < 4; ++i) {
    d.levels[i] = i == 0 ? std::move(parts[0])
                         : bilinear_resize_backward(p.levels[i].shape(), parts[i]);
  }
  return d;
}

// ---- waterfall ------------------------------------------------------------

template <typename T>
BasicTensor<T> waterfall_forward(const BasicTensor<T>& g0,
                                 const DWaspWeights<T>& w,
                                 const DWaspConfig& cfg,
                                 WaterfallTrace<T>* trace) {
  if (g0.c() != w.branches[0].cin()) {
    std::ostringstream os;
    os << "waterfall: input has " << g0.c() << " channels, weights expect "
       << w.branches[0].cin();
    throw ShapeError(os.str());
  }
  WaterfallTrace<T> local;
  WaterfallTrace<T>& t = trace ? *trace : local;
  t.g0 = g0;
  const BasicTensor<T>* g = &t.g0;
  for (int i = 0; i < 4; ++i) {
    t.stages[i] = relu(
        conv_apply(w.branches[i], *g, ConvSpec::same3x3(cfg.dilations[i])));
    g = &t.stages[i];
  }
  t.pooled = global_avg_pool(g0);
  t.pool_act = relu(conv_apply(w.pool, t.pooled, ConvSpec::pointwise()));
  const BasicTensor<T> pool_up = bilinear_resize(t.pool_act, g0.h(), g0.w());
  t.concat = concat_channels<T>(
      {&t.stages[0], &t.stages[1], &t.stages[2], &t.stages[3], &pool_up});
  t.out = relu(conv_apply(w.waterfall, t.concat, ConvSpec::pointwise()));
  return t.out;
}

template <typename T>
BasicTensor<T> waterfall_backward(const WaterfallTrace<T>& t,
                                  const DWaspWeights<T>& w,
                                  const DWaspConfig& cfg,
                                  const BasicTensor<T>& dout,
                                  DWaspWeights<T>& grad) {
  const BasicTensor<T> dconcat =
      conv_apply_backward(w.waterfall, t.concat, ConvSpec::pointwise(),
                          relu_backward(t.out, dout), grad.waterfall);
  const std::vector<int> widths{t.stages[0].c(), t.stages[1].c(),
                                t.stages[2].c(), t.stages[3].c(),
                                t.pool_act.c()};
  auto parts = split_channels(dconcat, std::span<const int>(widths));

  // Image-pooling branch.
  const BasicTensor<T> dpool_act =
      bilinear_resize_backward(t.pool_act.shape(), parts[4]);
  const BasicTensor<T> dpooled =
      conv_apply_backward(w.pool, t.pooled, ConvSpec::pointwise(),
                          relu_backward(t.pool_act, dpool_act), grad.pool);
  BasicTensor<T> dg0 = global_avg_pool_backward(t.g0.shape(), dpooled);

  // Cascade, last stage first; each stage also receives its concat slice.
  BasicTensor<T> d = std::move(parts[3]);
  for (int i = 3; i >= 0; --i) {
    const BasicTensor<T>& in = i > 0 ? t.stages[i - 1] : t.g0;
    BasicTensor<T> din = conv_apply_backward(
        w.branches[i], in, ConvSpec::same3x3(cfg.dilations[i]),
        relu_backward(t.stages[i], d), grad.branches[i]);
    if (i > 0) {
      add_inplace(din, parts[i - 1]);
      d = std::move(din);
    } else {
      add_inplace(dg0, din);
    }
  }
  return dg0;
}

// ---- low-level fusion -----------------------------------------------------

template <typename T>
BasicTensor<T> fuse_low_level(const BasicTensor<T>& low_level,
                              const BasicTensor<T>& waterfall,
                              const DWaspWeights<T>& w,
                              LowLevelTrace<T>* trace) {
  if (low_level.n() != waterfall.n() || low_level.h() != waterfall.h() ||
      low_level.w() != waterfall.w()) {
    throw ShapeError("fuse_low_level: low-level features " +
                     low_level.shape().str() + " and waterfall output " +
                     waterfall.shape().str() + " differ in extent");
  }
  LowLevelTrace<T> local;
  LowLevelTrace<T>& t = trace ? *trace : local;
  const ConvSpec pw = ConvSpec::pointwise();
  t.low_level = low_level;
  t.projected = relu(conv_apply(w.low_level, low_level, pw));
  t.sum = add(t.projected, waterfall);
  t.fused = relu(conv_apply(w.fuse, t.sum, pw));
  t.out = relu(conv_apply(w.reduce, t.fused, pw));
  return t.out;
}

template <typename T>
LowLevelGrads<T> fuse_low_level_backward(const LowLevelTrace<T>& t,
                                         const DWaspWeights<T>& w,
                                         const BasicTensor<T>& dout,
                                         DWaspWeights<T>& grad) {
  const ConvSpec pw = ConvSpec::pointwise();
  const BasicTensor<T> dfused = conv_apply_backward(
      w.reduce, t.fused, pw, relu_backward(t.out, dout), grad.reduce);
  BasicTensor<T> dsum = conv_apply_backward(
      w.fuse, t.sum, pw, relu_backward(t.fused, dfused), grad.fuse);
  BasicTensor<T> dlow = conv_apply_backward(
      w.low_level, t.low_level, pw, relu_backward(t.projected, dsum),
      grad.low_level);
  return {std::move(dlow), std::move(dsum)};
}

// ---- heads ----------------------------------------------------------------

template <typename T>
DWaspOutput<T> heads_forward(const BasicTensor<T>& features,
                             const DWaspWeights<T>& w, HeadsTrace<T>* trace) {
  if (features.c() != w.kp_adapt.cin()) {
    std::ostringstream os;
    os << "heads: features have " << features.c()
       << " channels, weights expect " << w.kp_adapt.cin();
    throw ShapeError(os.str());
  }
  HeadsTrace<T> local;
  HeadsTrace<T>& t = trace ? *trace : local;
  const ConvSpec pw = ConvSpec::pointwise();
  t.features = features;

  t.kp_offsets = predict_offsets(features, w.kp_predictor);
  t.kp_adapt = relu(adaptive_conv(features, w.kp_adapt.w,
                                  std::span<const T>(w.kp_adapt.b.values()),
                                  t.kp_offsets));
  t.heatmaps = sigmoid(conv_apply(w.kp_out, t.kp_adapt, pw));

  t.expanded = relu(conv_apply(w.off_expand, features, pw));
  const int groups = static_cast<int>(w.off_groups.size());
  const int gw = groups > 0 ? t.expanded.c() / groups : 0;
  t.groups.assign(groups, {});
  std::vector<BasicTensor<T>> outs;
  for (int k = 0; k < groups; ++k) {
    const auto& gwts = w.off_groups[k];
    auto& g = t.groups[k];
    g.input = slice_channels(t.expanded, k * gw, gw);
    g.offsets = predict_offsets(g.input, gwts.predictor);
    g.adapt = relu(adaptive_conv(g.input, gwts.adapt.w,
                                 std::span<const T>(gwts.adapt.b.values()),
                                 g.offsets));
    outs.push_back(conv_apply(gwts.out, g.adapt, pw));
  }
  DWaspOutput<T> out;
  out.heatmaps = t.heatmaps;
  out.offsets = concat_channels<T>(std::span<const BasicTensor<T>>(outs));
  return out;
}

template <typename T>
BasicTensor<T> heads_backward(const HeadsTrace<T>& t, const DWaspWeights<T>& w,
                              const DWaspOutput<T>& dout,
                              DWaspWeights<T>& grad) {
  const ConvSpec pw = ConvSpec::pointwise();

  // Keypoint head.
  const BasicTensor<T> dlogits = sigmoid_backward(t.heatmaps, dout.heatmaps);
  const BasicTensor<T> dkp_adapt =
      conv_apply_backward(w.kp_out, t.kp_adapt, pw, dlogits, grad.kp_out);
  auto ag = adaptive_conv_backward(t.features, w.kp_adapt.w, t.kp_offsets,
                                   relu_backward(t.kp_adapt, dkp_adapt));
  add_inplace(grad.kp_adapt.w, ag.dw);
  for (std::size_t i = 0; i < ag.db.size(); ++i) grad.kp_adapt.b[i] += ag.db[i];
  BasicTensor<T> dfeat = std::move(ag.dx);
  add_inplace(dfeat, predict_offsets_backward(t.features, w.kp_predictor,
                                              ag.doffsets, grad.kp_predictor));

  // Offset head.
  const int groups = static_cast<int>(w.off_groups.size());
  const std::vector<int> widths(groups, 2);
  auto douts = split_channels(dout.offsets, std::span<const int>(widths));
  std::vector<BasicTensor<T>> dinputs;
  for (int k = 0; k < groups; ++k) {
    const auto& gwts = w.off_groups[k];
    auto& ggrad = grad.off_groups[k];
    const auto& g = t.groups[k];
    const BasicTensor<T> dadapt =
        conv_apply_backward(gwts.out, g.adapt, pw, douts[k], ggrad.out);
    auto gg = adaptive_conv_backward(g.input, gwts.adapt.w, g.offsets,
                                     relu_backward(g.adapt, dadapt));
    add_inplace(ggrad.adapt.w, gg.dw);
    for (std::size_t i = 0; i < gg.db.size(); ++i) ggrad.adapt.b[i] += gg.db[i];
    BasicTensor<T> din = std::move(gg.dx);
    add_inplace(din, predict_offsets_backward(g.input, gwts.predictor,
                                              gg.doffsets, ggrad.predictor));
    dinputs.push_back(std::move(din));
  }
  if (groups > 0) {
    const BasicTensor<T> dexpanded =
        concat_channels<T>(std::span<const BasicTensor<T>>(dinputs));
    add_inplace(dfeat, conv_apply_backward(w.off_expand, t.features, pw,
                                           relu_backward(t.expanded, dexpanded),
                                           grad.off_expand));
  }
  return dfeat;
}

// ---- full module ----------------------------------------------------------

template <typename T>
DWaspOutput<T> dwasp_forward(const FeaturePyramid<T>& p,
                             const DWaspWeights<T>& w, const DWaspConfig& cfg,
                             DWaspTrace<T>* trace) {
  DWaspTrace<T> local;
  DWaspTrace<T>& t = trace ? *trace : local;
  t.pyramid = p;
  const BasicTensor<T> g0 = fuse_pyramid(p);
  const BasicTensor<T> wf = waterfall_forward(g0, w, cfg, &t.waterfall);
  const BasicTensor<T> maps = fuse_low_level(p.low_level, wf, w, &t.low_level);
  return heads_forward(maps, w, &t.heads);
}

template <typename T>
FeaturePyramid<T> dwasp_backward(const DWaspTrace<T>& t,
                                 const DWaspWeights<T>& w,
                                 const DWaspConfig& cfg,
                                 const DWaspOutput<T>& dout,
                                 DWaspWeights<T>& grad) {
  const BasicTensor<T> dmaps = heads_backward(t.heads, w, dout, grad);
  auto dl = fuse_low_level_backward(t.low_level, w, dmaps, grad);
  const BasicTensor<T> dg0 =
      waterfall_backward(t.waterfall, w, cfg, dl.dwaterfall, grad);
  FeaturePyramid<T> d = fuse_pyramid_backward(t.pyramid, dg0);
  d.low_level = std::move(dl.dlow_level);
  return d;
}

#define BAPOSE_INSTANTIATE_DWASP(T)                                            \
  template struct DWaspWeights<T>;                                             \
  template BasicTensor<T> fuse_pyramid(const FeaturePyramid<T>&);              \
  template FeaturePyramid<T> fuse_pyramid_backward(const FeaturePyramid<T>&,   \
                                                   const BasicTensor<T>&);     \
  template BasicTensor<T> waterfall_forward(                                   \
      const BasicTensor<T>&, const DWaspWeights<T>&, const DWaspConfig&,       \
      WaterfallTrace<T>*);                                                     \
  template BasicTensor<T> waterfall_backward(                                  \
      const WaterfallTrace<T>&, const DWaspWeights<T>&, const DWaspConfig&,    \
      const BasicTensor<T>&, DWaspWeights<T>&);                                \
  template BasicTensor<T> fuse_low_level(const BasicTensor<T>&,                \
                                         const BasicTensor<T>&,                \
                                         const DWaspWeights<T>&,               \
                                         LowLevelTrace<T>*);                   \
  template LowLevelGrads<T> fuse_low_level_backward(                           \
      const LowLevelTrace<T>&, const DWaspWeights<T>&, const BasicTensor<T>&,  \
      DWaspWeights<T>&);                                                       \
  template DWaspOutput<T> heads_forward(const BasicTensor<T>&,                 \
                                        const DWaspWeights<T>&,                \
                                        HeadsTrace<T>*);                       \
  template BasicTensor<T> heads_backward(const HeadsTrace<T>&,                 \
                                         const DWaspWeights<T>&,               \
                                         const DWaspOutput<T>&,                \
                                         DWaspWeights<T>&);                    \
  template DWaspOutput<T> dwasp_forward(const FeaturePyramid<T>&,              \
                                        const DWaspWeights<T>&,                \
                                        const DWaspConfig&, DWaspTrace<T>*);   \
  template FeaturePyramid<T> dwasp_backward(                                   \
      const DWaspTrace<T>&, const DWaspWeights<T>&, const DWaspConfig&,        \
      const DWaspOutput<T>&, DWaspWeights<T>&);

BAPOSE_INSTANTIATE_DWASP(float)
BAPOSE_INSTANTIATE_DWASP(double)

#undef BAPOSE_INSTANTIATE_DWASP

}  // namespace bapose
