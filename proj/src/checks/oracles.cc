#include "bapose/checks/oracles.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>

namespace bapose::oracle {

Tensor64 naive_conv2d(const Tensor64& x, const Tensor64& w,
                      std::span<const double> bias, const ConvSpec& spec) {
  const int oh = (x.h() + 2 * spec.pad - (spec.kh - 1) * spec.dilation - 1) /
                     spec.stride + 1;
  const int ow = (x.w() + 2 * spec.pad - (spec.kw - 1) * spec.dilation - 1) /
                     spec.stride + 1;
  Tensor64 y(x.n(), w.n(), oh, ow);
  for (int n = 0; n < x.n(); ++n)
    for (int co = 0; co < w.n(); ++co)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          double acc = bias.empty() ? 0.0 : bias[co];
          for (int ci = 0; ci < x.c(); ++ci)
            for (int u = 0; u < spec.kh; ++u)
              for (int v = 0; v < spec.kw; ++v) {
                const int r = i * spec.stride - spec.pad + u * spec.dilation;
                const int c = j * spec.stride - spec.pad + v * spec.dilation;
                if (r < 0 || r >= x.h() || c < 0 || c >= x.w()) continue;
                acc += w(co, ci, u, v) * x(n, ci, r, c);
              }
          y(n, co, i, j) = acc;
        }
  return y;
}

namespace {

double lookup(const Tensor64& x, int n, int c, int r, int col) {
  if (r < 0 || r >= x.h() || col < 0 || col >= x.w()) return 0.0;
  return x(n, c, r, col);
}

double bilinear(const Tensor64& x, int n, int c, double r, double col) {
  const double r0 = std::floor(r), c0 = std::floor(col);
  const double fr = r - r0, fc = col - c0;
  const int ir = static_cast<int>(r0), ic = static_cast<int>(c0);
  return (1 - fr) * (1 - fc) * lookup(x, n, c, ir, ic) +
         (1 - fr) * fc * lookup(x, n, c, ir, ic + 1) +
         fr * (1 - fc) * lookup(x, n, c, ir + 1, ic) +
         fr * fc * lookup(x, n, c, ir + 1, ic + 1);
}

Tensor64 rectify(Tensor64 t) {
  for (double& v : t.values()) v = v > 0 ? v : 0.0;
  return t;
}

Tensor64 pointwise(const ConvParams<double>& p, const Tensor64& x) {
  return naive_conv2d(x, p.w, p.b.values(), ConvSpec{1, 1, 1, 0, 1});
}

}  // namespace

Tensor64 naive_adaptive_conv(const Tensor64& x, const Tensor64& w,
                             std::span<const double> bias,
                             const Tensor64& offsets) {
  Tensor64 y(x.n(), w.n(), offsets.h(), offsets.w());
  for (int n = 0; n < x.n(); ++n)
    for (int co = 0; co < w.n(); ++co)
      for (int i = 0; i < y.h(); ++i)
        for (int j = 0; j < y.w(); ++j) {
          double acc = bias.empty() ? 0.0 : bias[co];
          for (int tap = 0; tap < 9; ++tap) {
            const double r = i + offsets(n, 2 * tap, i, j);
            const double c = j + offsets(n, 2 * tap + 1, i, j);
            for (int ci = 0; ci < x.c(); ++ci) {
              acc += w(co, ci, tap / 3, tap % 3) * bilinear(x, n, ci, r, c);
            }
          }
          y(n, co, i, j) = acc;
        }
  return y;
}

Tensor64 straight_waterfall(const Tensor64& g0, const DWaspWeights<double>& w,
                            const DWaspConfig& cfg) {
  std::vector<Tensor64> parts;
  Tensor64 g = g0;
  for (int i = 0; i < 4; ++i) {
    const int d = cfg.dilations[i];
    g = rectify(naive_conv2d(g, w.branches[i].w, w.branches[i].b.values(),
                             ConvSpec{3, 3, 1, d, d}));
    parts.push_back(g);
  }
  Tensor64 mean(g0.n(), g0.c(), 1, 1);
  for (int n = 0; n < g0.n(); ++n)
    for (int c = 0; c < g0.c(); ++c) {
      double acc = 0;
      for (int i = 0; i < g0.h(); ++i)
        for (int j = 0; j < g0.w(); ++j) acc += g0(n, c, i, j);
      mean(n, c, 0, 0) = acc / (g0.h() * g0.w());
    }
  const Tensor64 pooled = rectify(pointwise(w.pool, mean));
  Tensor64 broadcast(g0.n(), pooled.c(), g0.h(), g0.w());
  for (int n = 0; n < g0.n(); ++n)
    for (int c = 0; c < pooled.c(); ++c)
      for (int i = 0; i < g0.h(); ++i)
        for (int j = 0; j < g0.w(); ++j)
          broadcast(n, c, i, j) = pooled(n, c, 0, 0);
  parts.push_back(broadcast);

  int total = 0;
  for (const auto& p : parts) total += p.c();
  Tensor64 cat(g0.n(), total, g0.h(), g0.w());
  int base = 0;
  for (const auto& p : parts) {
    for (int n = 0; n < p.n(); ++n)
      for (int c = 0; c < p.c(); ++c)
        for (int i = 0; i < p.h(); ++i)
          for (int j = 0; j < p.w(); ++j)
            cat(n, base + c, i, j) = p(n, c, i, j);
    base += p.c();
  }
  return rectify(pointwise(w.waterfall, cat));
}

Tensor64 straight_low_level(const Tensor64& low_level,
                            const Tensor64& waterfall,
                            const DWaspWeights<double>& w) {
  Tensor64 sum = rectify(pointwise(w.low_level, low_level));
  for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += waterfall[i];
  return rectify(pointwise(w.reduce, rectify(pointwise(w.fuse, sum))));
}

double dot(const Tensor64& r, const Tensor64& y) {
  if (r.shape() != y.shape()) {
    throw ShapeError("dot: " + r.shape().str() + " vs " + y.shape().str());
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) acc += r[i] * y[i];
  return acc;
}

namespace {

struct Scored {
  double score;
  bool tp;
};

double similarity(const PoseInstance& p, const PersonAnnotation& g,
                  const std::vector<double>& k) {
  double total = 0;
  int n = 0;
  for (std::size_t i = 0; i < g.keypoints.size(); ++i) {
    if (g.keypoints[i].v <= 0) continue;
    const double dx = p.keypoints[i].x - g.keypoints[i].x;
    const double dy = p.keypoints[i].y - g.keypoints[i].y;
    total += std::exp(-(dx * dx + dy * dy) / (2.0 * g.area * k[i] * k[i]));
    n += 1;
  }
  return total / n;
}

double box_area(const PoseInstance& p) {
  double lo_x = INFINITY, hi_x = -INFINITY, lo_y = INFINITY, hi_y = -INFINITY;
  for (const auto& k : p.keypoints) {
    lo_x = std::min(lo_x, k.x);
    hi_x = std::max(hi_x, k.x);
    lo_y = std::min(lo_y, k.y);
    hi_y = std::max(hi_y, k.y);
  }
  return p.keypoints.empty() ? 0.0 : (hi_x - lo_x) * (hi_y - lo_y);
}

struct Subset {
  double area_lo = 0, area_hi = 1e10;
  bool by_crowd = false;
  double crowd_lo = 0, crowd_hi = 0;
  bool closed = false;
};

std::optional<std::pair<double, double>> ap_ar(
    const std::vector<ImageEval>& images, const EvalSettings& st,
    const Subset& sub, double thr) {
  std::vector<Scored> pool;
  int npos = 0;
  for (const auto& im : images) {
    if (sub.by_crowd) {
      if (!im.crowd_index) continue;
      const double c = *im.crowd_index;
      if (c < sub.crowd_lo) continue;
      if (sub.closed ? c > sub.crowd_hi : c >= sub.crowd_hi) continue;
    }
    // Ground truths: labeled ones only, non-ignored first (stable).
    std::vector<const PersonAnnotation*> kept, ign;
    for (const auto& g : im.gts) {
      int labeled = 0;
      for (const auto& k : g.keypoints) labeled += k.v > 0;
      if (labeled == 0) continue;
      const bool inside = g.area >= sub.area_lo && g.area <= sub.area_hi;
      (inside ? kept : ign).push_back(&g);
    }
    npos += static_cast<int>(kept.size());
    std::vector<const PersonAnnotation*> gts = kept;
    gts.insert(gts.end(), ign.begin(), ign.end());

    std::vector<const PoseInstance*> preds;
    for (const auto& p : im.preds) preds.push_back(&p);
    std::stable_sort(preds.begin(), preds.end(),
                     [](auto a, auto b) { return a->score > b->score; });
    if (static_cast<int>(preds.size()) > st.max_detections) {
      preds.resize(st.max_detections);
    }
    std::vector<char> used(gts.size(), 0);
    for (const auto* p : preds) {
      int m = -1;
      double best = thr;
      for (std::size_t g = 0; g < gts.size(); ++g) {
        const bool ignored = g >= kept.size();
        if (m >= 0 && static_cast<std::size_t>(m) < kept.size() && ignored) break;
        if (used[g]) continue;
        const double o = similarity(*p, *gts[g], st.oks.falloff);
        if (o < thr) continue;
        if (m < 0 || o > best) {
          m = static_cast<int>(g);
          best = o;
        }
      }
      if (m >= 0) {
        used[m] = 1;
        if (static_cast<std::size_t>(m) < kept.size()) pool.push_back({p->score, true});
      } else {
        const double a = box_area(*p);
        if (a >= sub.area_lo && a <= sub.area_hi) pool.push_back({p->score, false});
      }
    }
  }
  if (npos == 0) return std::nullopt;
  std::stable_sort(pool.begin(), pool.end(),
                   [](const Scored& a, const Scored& b) { return a.score > b.score; });
  std::vector<double> prec, rec;
  int tp = 0;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    tp += pool[i].tp;
    rec.push_back(static_cast<double>(tp) / npos);
    prec.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
  }
  double sum = 0;
  for (int r = 0; r <= 100; ++r) {
    const double level = r / 100.0;
    double best = 0;
    bool any = false;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (rec[i] >= level) {
        best = any ? std::max(best, prec[i]) : prec[i];
        any = true;
      }
    }
    sum += best;
  }
  return std::pair{sum / 101.0, rec.empty() ? 0.0 : rec.back()};
}

void averaged(const std::vector<ImageEval>& images, const EvalSettings& st,
              const Subset& sub, std::optional<double>* ap,
              std::optional<double>* ar,
              std::array<std::optional<double>, 10>* per = nullptr) {
  double sa = 0, sr = 0;
  bool defined = true;
  for (int j = 0; j < 10; ++j) {
    const auto v = ap_ar(images, st, sub, (50 + 5 * j) / 100.0);
    if (per) (*per)[j] = v ? std::optional<double>(v->first) : std::nullopt;
    if (!v) {
      defined = false;
      continue;
    }
    sa += v->first;
    sr += v->second;
  }
  if (!defined) return;
  if (ap) *ap = sa / 10.0;
  if (ar) *ar = sr / 10.0;
}

}  // namespace

EvalResult brute_force_evaluate(const std::vector<ImageEval>& images,
                                const EvalSettings& st) {
  EvalResult r;
  for (const auto& im : images) {
    for (const auto& g : im.gts) r.gt_count += g.labeled_count() > 0;
    r.pred_count += std::min<int>(static_cast<int>(im.preds.size()),
                                  st.max_detections);
  }
  averaged(images, st, Subset{}, &r.ap, &r.ar, &r.ap_per_threshold);
  r.ap50 = r.ap_per_threshold[0];
  r.ap75 = r.ap_per_threshold[5];
  if (st.style == EvalStyle::kCoco) {
    Subset m{st.area_medium[0], st.area_medium[1]};
    Subset l{st.area_large[0], st.area_large[1]};
    averaged(images, st, m, &r.ap_medium, &r.ar_medium);
    averaged(images, st, l, &r.ap_large, &r.ar_large);
  } else {
    const auto& e = st.crowd_edges;
    averaged(images, st, Subset{0, 1e10, true, e[0], e[1], false}, &r.ap_easy, nullptr);
    averaged(images, st, Subset{0, 1e10, true, e[1], e[2], false},
             &r.ap_medium_crowd, nullptr);
    averaged(images, st, Subset{0, 1e10, true, e[2], e[3], true}, &r.ap_hard, nullptr);
  }
  return r;
}

std::array<double, 2> transform_point(const AffineParams& p, int width,
                                      int height, double x, double y) {
  const double cx = (width - 1) / 2.0, cy = (height - 1) / 2.0;
  double u = x - cx, v = y - cy;
  const double th = p.rotation * std::numbers::pi / 180.0;
  const double ru = std::cos(th) * u - std::sin(th) * v;
  const double rv = std::sin(th) * u + std::cos(th) * v;
  u = ru * p.scale;
  v = rv * p.scale;
  return {u + cx + p.tx, v + cy + p.ty};
}

}  // namespace bapose::oracle
