#include "bapose/train.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "bapose/error.h"
#include "bapose/ops.h"

namespace bapose {

void TrainConfig::validate() const {
  std::ostringstream os;
  if (epochs < 0) {
    os << "train.epochs must be >= 0, got " << epochs;
  } else if (!(lr > 0)) {
    os << "train.lr must be positive, got " << lr;
  } else if (!std::is_sorted(lr_steps.begin(), lr_steps.end())) {
    os << "train.lr_steps must be ascending";
  } else if (!(lr_factor > 0)) {
    os << "train.lr_factor must be positive, got " << lr_factor;
  } else if (!(rotation >= 0 && translation >= 0)) {
    os << "train.rotation and train.translation must be >= 0";
  } else if (!(scale_min > 0 && scale_min <= scale_max)) {
    os << "train.scale_min/scale_max must satisfy 0 < min <= max";
  } else if (!(heat_weight >= 0 && offset_weight >= 0)) {
    os << "loss weights must be >= 0";
  } else if (optimizer != "adam") {
    os << "train.optimizer '" << optimizer << "' is not supported (adam)";
  } else if (!(sigma > 0)) {
    os << "train.sigma must be positive, got " << sigma;
  } else if (offset_radius < 0) {
    os << "train.offset_radius must be >= 0, got " << offset_radius;
  } else if (checkpoint_every < 0) {
    os << "train.checkpoint_every must be >= 0, got " << checkpoint_every;
  } else {
    return;
  }
  throw ConfigError(os.str());
}

double lr_at_epoch(int epoch, const TrainConfig& cfg) {
  double lr = cfg.lr;
  for (int step : cfg.lr_steps) {
    if (epoch >= step) lr *= cfg.lr_factor;
  }
  return lr;
}

template <typename T>
LossValue<T> heatmap_loss(const BasicTensor<T>& pred,
                          const BasicTensor<T>& target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("heatmap_loss: prediction " + pred.shape().str() +
                     " vs target " + target.shape().str());
  }
  LossValue<T> out{0, BasicTensor<T>(pred.shape())};
  if (pred.size() == 0) return out;
  const double inv = 1.0 / static_cast<double>(pred.size());
  double acc = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = static_cast<double>(pred[i]) - target[i];
    acc += e * e;
    out.grad[i] = static_cast<T>(2.0 * e * inv);
  }
  out.value = acc * inv;
  return out;
}

template <typename T>
LossValue<T> offset_loss(const BasicTensor<T>& pred,
                         const BasicTensor<T>& target,
                         const BasicTensor<T>& mask,
                         const BasicTensor<T>& norm) {
  const Shape& s = pred.shape();
  if (target.shape() != s || mask.shape() != s ||
      norm.shape() != Shape{s.n, 1, s.h, s.w}) {
    throw ShapeError("offset_loss: prediction " + s.str() + ", target " +
                     target.shape().str() + ", mask " + mask.shape().str() +
                     ", norm " + norm.shape().str());
  }
  LossValue<T> out{0, BasicTensor<T>(s)};
  std::size_t active = 0;
  for (T m : mask.values()) active += m != T(0);
  if (active == 0) return out;
  const double inv = 1.0 / static_cast<double>(active);
  double acc = 0;
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (int y = 0; y < s.h; ++y) {
        for (int x = 0; x < s.w; ++x) {
          if (mask(n, c, y, x) == T(0)) continue;
          const double z = norm(n, 0, y, x);
          const double e =
              (static_cast<double>(pred(n, c, y, x)) - target(n, c, y, x)) / z;
          const double a = std::abs(e);
          acc += a < 1 ? 0.5 * e * e : a - 0.5;
          const double de = a < 1 ? e : (e > 0 ? 1.0 : -1.0);
          out.grad(n, c, y, x) = static_cast<T>(de / z * inv);
        }
      }
    }
  }
  out.value = acc * inv;
  return out;
}

template <typename T>
LossBreakdown total_loss(const DWaspOutput<T>& out,
                         const TrainingTargets<T>& targets,
                         const TrainConfig& cfg, DWaspOutput<T>* dout) {
  auto heat = heatmap_loss(out.heatmaps, targets.heatmaps);
  auto off = offset_loss(out.offsets, targets.offsets, targets.mask,
                         targets.norm);
  LossBreakdown b{heat.value, off.value,
                  cfg.heat_weight * heat.value + cfg.offset_weight * off.value};
  if (dout) {
    dout->heatmaps = scale(heat.grad, static_cast<T>(cfg.heat_weight));
    dout->offsets = scale(off.grad, static_cast<T>(cfg.offset_weight));
  }
  return b;
}

// ---- augmentation ---------------------------------------------------------

AffineParams sample_affine(Rng& rng, const TrainConfig& cfg) {
  AffineParams p;
  p.rotation = rng.uniform(-cfg.rotation, cfg.rotation);
  p.scale = rng.uniform(cfg.scale_min, cfg.scale_max);
  p.tx = rng.uniform(-cfg.translation, cfg.translation);
  p.ty = rng.uniform(-cfg.translation, cfg.translation);
  return p;
}

Affine affine_matrix(const AffineParams& p, int width, int height) {
  const double th = p.rotation * std::numbers::pi / 180.0;
  const double c = std::cos(th) * p.scale, s = std::sin(th) * p.scale;
  const double cx = (width - 1) / 2.0, cy = (height - 1) / 2.0;
  // x' = R S (x - centre) + centre + t
  return {c, -s, cx - c * cx + s * cy + p.tx,
          s, c,  cy - s * cx - c * cy + p.ty};
}

Affine invert(const Affine& m) {
  const double det = m[0] * m[4] - m[1] * m[3];
  if (det == 0 || !std::isfinite(det)) {
    throw NumericError("affine transform is not invertible");
  }
  const double a = m[4] / det, b = -m[1] / det;
  const double c = -m[3] / det, d = m[0] / det;
  return {a, b, -(a * m[2] + b * m[5]), c, d, -(c * m[2] + d * m[5])};
}

TrainSample apply_affine(const TrainSample& s, const Affine& m) {
  const int h = s.image.h(), w = s.image.w();
  const Affine inv = invert(m);
  TrainSample out{Tensor(s.image.shape()), s.people};
  for (int c = 0; c < s.image.c(); ++c) {
    const float* src = s.image.plane(0, c).data();
    float* dst = out.image.plane(0, c).data();
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double sx = inv[0] * x + inv[1] * y + inv[2];
        const double sy = inv[3] * x + inv[4] * y + inv[5];
        dst[static_cast<std::size_t>(y) * w + x] = sample_plane<float>(
            src, h, w, static_cast<float>(sy), static_cast<float>(sx));
      }
    }
  }
  const double scale2 = std::abs(m[0] * m[4] - m[1] * m[3]);
  for (auto& p : out.people) {
    for (auto& k : p.keypoints) {
      const double x = m[0] * k.x + m[1] * k.y + m[2];
      const double y = m[3] * k.x + m[4] * k.y + m[5];
      k.x = x;
      k.y = y;
      if (k.labeled() && (x < 0 || x > w - 1 || y < 0 || y > h - 1)) k.v = 0;
    }
    p.area *= scale2;
    const auto& b = p.bbox;
    double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
    for (auto [cx, cy] : {std::pair{b[0], b[1]}, {b[0] + b[2], b[1]},
                          {b[0], b[1] + b[3]}, {b[0] + b[2], b[1] + b[3]}}) {
      const double x = m[0] * cx + m[1] * cy + m[2];
      const double y = m[3] * cx + m[4] * cy + m[5];
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
    p.bbox = {x0, y0, x1 - x0, y1 - y0};
  }
  return out;
}

TrainSample augment_sample(const TrainSample& s, Rng& rng,
                           const TrainConfig& cfg) {
  const AffineParams p = sample_affine(rng, cfg);
  return apply_affine(s, affine_matrix(p, s.image.w(), s.image.h()));
}

TrainingTargets<float> make_targets(const TrainSample& s, const ModelConfig& mc,
                                    const TrainConfig& tc) {
  const int stride = mc.pyramid.base_stride;
  const int h = s.image.h() / stride, w = s.image.w() / stride;
  const int k = mc.dwasp.keypoints;
  std::vector<PersonAnnotation> hm;
  for (const auto& p : s.people) hm.push_back(annotation_to_heatmap(p, stride));
  TrainingTargets<float> t;
  t.heatmaps = render_keypoint_heatmaps(hm, k, h, w, tc.sigma);
  if (!mc.dwasp.center_map) t.heatmaps = slice_channels(t.heatmaps, 0, k);
  OffsetTargets o = render_offset_targets(hm, k, h, w, mc.dwasp.offset_mode,
                                          tc.offset_radius);
  t.offsets = std::move(o.offsets);
  t.mask = std::move(o.mask);
  t.norm = std::move(o.norm);
  return t;
}

// ---- optimizer ------------------------------------------------------------

OptimState OptimState::zeros_like(const Model<float>& model) {
  OptimState s;
  model.visit([&](const std::string&, const Tensor& t) {
    s.m.emplace_back(t.shape());
    s.v.emplace_back(t.shape());
  });
  return s;
}

void optim_step(Model<float>& model, const Model<float>& grad,
                OptimState& state, double lr) {
  std::vector<const Tensor*> grads;
  grad.visit([&](const std::string&, const Tensor& g) { grads.push_back(&g); });
  if (state.m.size() != grads.size() || state.v.size() != grads.size()) {
    throw ShapeError("optimizer state does not mirror the weight set");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(kAdamBeta1, t);
  const double c2 = 1.0 - std::pow(kAdamBeta2, t);
  std::size_t i = 0;
  model.visit([&](const std::string& name, Tensor& w) {
    const Tensor& g = *grads[i];
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    ++i;
    if (g.shape() != w.shape() || m.shape() != w.shape() ||
        v.shape() != w.shape()) {
      throw ShapeError("optimizer: shape mismatch for " + name);
    }
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g[j];
      const double mj = kAdamBeta1 * m[j] + (1 - kAdamBeta1) * gj;
      const double vj = kAdamBeta2 * v[j] + (1 - kAdamBeta2) * gj * gj;
      m[j] = static_cast<float>(mj);
      v[j] = static_cast<float>(vj);
      w[j] = static_cast<float>(w[j] - lr * (mj / c1) /
                                           (std::sqrt(vj / c2) + kAdamEps));
    }
  });
}

// ---- loop -----------------------------------------------------------------

std::string format_epoch_log(const EpochLog& e) {
  std::ostringstream os;
  os.precision(9);
  os << e.epoch << '\t' << e.lr << '\t' << e.heat << '\t' << e.offset << '\t'
     << e.total;
  return os.str();
}

namespace {

std::uint64_t epoch_seed(std::uint64_t seed, int epoch) {
  // splitmix64 finaliser over (seed, epoch)
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (epoch + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

void train_loop(const std::vector<TrainSample>& data, TrainState& state,
                const ModelConfig& mc, const TrainConfig& tc,
                const std::function<void(const EpochLog&, const TrainState&)>&
                    on_epoch) {
  tc.validate();
  if (state.optim.m.empty()) state.optim = OptimState::zeros_like(state.model);
  std::uint64_t step = state.optim.step;
  for (int epoch = state.epoch; epoch < tc.epochs; ++epoch) {
    Rng rng(epoch_seed(tc.seed, epoch));
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.below(i)]);
    }
    const double lr = lr_at_epoch(epoch, tc);
    EpochLog log{epoch + 1, lr, 0, 0, 0};
    for (std::size_t idx : order) {
      const TrainSample sample =
          tc.augment ? augment_sample(data[idx], rng, tc) : data[idx];
      const TrainingTargets<float> targets = make_targets(sample, mc, tc);
      ModelTrace<float> trace;
      const DWaspOutput<float> out =
          model_forward(sample.image, state.model, mc, &trace);
      DWaspOutput<float> dout;
      const LossBreakdown loss = total_loss(out, targets, tc, &dout);
      if (!std::isfinite(loss.total)) {
        std::ostringstream os;
        os << "non-finite loss at step " << step << " (epoch " << epoch + 1
           << ", sample " << idx << ")";
        throw NumericError(os.str());
      }
      Model<float> grad = Model<float>::zeros(mc);
      model_backward(trace, state.model, mc, dout, grad);
      optim_step(state.model, grad, state.optim, lr);
      ++step;
      log.heat += loss.heat;
      log.offset += loss.offset;
      log.total += loss.total;
    }
    if (!data.empty()) {
      const double n = static_cast<double>(data.size());
      log.heat /= n;
      log.offset /= n;
      log.total /= n;
    }
    state.epoch = epoch + 1;
    if (on_epoch) on_epoch(log, state);
  }
}

#define BAPOSE_INSTANTIATE_LOSSES(T)                                          \
  template LossValue<T> heatmap_loss(const BasicTensor<T>&,                   \
                                     const BasicTensor<T>&);                  \
  template LossValue<T> offset_loss(const BasicTensor<T>&,                    \
                                    const BasicTensor<T>&,                    \
                                    const BasicTensor<T>&,                    \
                                    const BasicTensor<T>&);                   \
  template LossBreakdown total_loss(const DWaspOutput<T>&,                    \
                                    const TrainingTargets<T>&,                \
                                    const TrainConfig&, DWaspOutput<T>*);

BAPOSE_INSTANTIATE_LOSSES(float)
BAPOSE_INSTANTIATE_LOSSES(double)

}  // namespace bapose
