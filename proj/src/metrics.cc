#include "bapose/metrics.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <utility>

#include "bapose/error.h"

namespace bapose {

void OksParams::validate() const {
  if (falloff.empty()) throw ConfigError("oks falloff table is empty");
  for (std::size_t i = 0; i < falloff.size(); ++i) {
    if (!std::isfinite(falloff[i]) || falloff[i] <= 0) {
      std::ostringstream os;
      os << "oks falloff constant " << i << " must be positive, got "
         << falloff[i];
      throw ConfigError(os.str());
    }
  }
}

double oks(const PoseInstance& pred, const PersonAnnotation& gt,
           const OksParams& params) {
  const std::size_t k = gt.keypoints.size();
  if (pred.keypoints.size() != k || params.falloff.size() != k) {
    std::ostringstream os;
    os << "oks: prediction has " << pred.keypoints.size()
       << " keypoints, ground truth " << k << ", falloff table "
       << params.falloff.size();
    throw ShapeError(os.str());
  }
  const double s2 = gt.area;
  double acc = 0;
  int labeled = 0;
  for (std::size_t i = 0; i < k; ++i) {
    if (!gt.keypoints[i].labeled()) continue;
    const double dx = pred.keypoints[i].x - gt.keypoints[i].x;
    const double dy = pred.keypoints[i].y - gt.keypoints[i].y;
    const double ki = params.falloff[i];
    acc += std::exp(-(dx * dx + dy * dy) / (2.0 * s2 * ki * ki));
    ++labeled;
  }
  if (labeled == 0) {
    throw NumericError("oks undefined: ground truth " + std::to_string(gt.id) +
                       " has no labeled keypoints");
  }
  return acc / labeled;
}

std::vector<int> match_and_score(const std::vector<PoseInstance>& preds,
                                 const std::vector<PersonAnnotation>& gts,
                                 double threshold, const OksParams& params) {
  std::vector<int> match(preds.size(), -1);
  std::vector<bool> taken(gts.size(), false);
  for (std::size_t p = 0; p < preds.size(); ++p) {
    int best = -1;
    double best_oks = 0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g]) continue;
      const double o = oks(preds[p], gts[g], params);
      if (o < threshold) continue;
      if (best < 0 || o > best_oks) {
        best = static_cast<int>(g);
        best_oks = o;
      }
    }
    if (best >= 0) {
      taken[best] = true;
      match[p] = best;
    }
  }
  return match;
}

std::string to_string(EvalStyle s) {
  return s == EvalStyle::kCoco ? "coco" : "crowdpose";
}

EvalStyle parse_eval_style(const std::string& s) {
  if (s == "coco") return EvalStyle::kCoco;
  if (s == "crowdpose") return EvalStyle::kCrowdPose;
  throw ConfigError("unknown evaluation style '" + s +
                    "' (expected coco or crowdpose)");
}

double oks_threshold(int j) { return (50 + 5 * j) / 100.0; }

double keypoint_box_area(const PoseInstance& p) {
  if (p.keypoints.empty()) return 0;
  double x0 = p.keypoints[0].x, x1 = x0, y0 = p.keypoints[0].y, y1 = y0;
  for (const auto& k : p.keypoints) {
    x0 = std::min(x0, k.x);
    x1 = std::max(x1, k.x);
    y0 = std::min(y0, k.y);
    y1 = std::max(y1, k.y);
  }
  return (x1 - x0) * (y1 - y0);
}

namespace {

// Per image: usable ground truths, score-sorted capped predictions and their
// OKS matrix, computed once for all thresholds and buckets.
struct Prepared {
  std::optional<double> crowd_index;
  std::vector<double> gt_area;
  std::vector<double> pred_score;
  std::vector<double> pred_area;
  std::vector<double> oks;  // [pred][gt]
};

std::vector<Prepared> prepare(const std::vector<ImageEval>& images,
                              const EvalSettings& settings) {
  std::vector<Prepared> out;
  out.reserve(images.size());
  for (const auto& im : images) {
    Prepared p;
    p.crowd_index = im.crowd_index;
    std::vector<const PersonAnnotation*> gts;
    for (const auto& g : im.gts) {
      if (g.labeled_count() > 0) gts.push_back(&g);
    }
    std::vector<std::size_t> order(im.preds.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
      return im.preds[a].score > im.preds[b].score;
    });
    if (order.size() > static_cast<std::size_t>(settings.max_detections)) {
      order.resize(settings.max_detections);
    }
    for (const auto* g : gts) p.gt_area.push_back(g->area);
    for (std::size_t i : order) {
      p.pred_score.push_back(im.preds[i].score);
      p.pred_area.push_back(keypoint_box_area(im.preds[i]));
      for (const auto* g : gts) {
        p.oks.push_back(oks(im.preds[i], *g, settings.oks));
      }
    }
    out.push_back(std::move(p));
  }
  return out;
}

bool in_range(double v, const std::array<double, 2>& r) {
  return v >= r[0] && v <= r[1];
}

bool image_selected(const Prepared& p, const BucketFilter& f) {
  if (!f.crowd) return true;
  if (!p.crowd_index) return false;
  const double c = *p.crowd_index;
  const auto& r = *f.crowd;
  return c >= r[0] && (f.crowd_hi_closed ? c <= r[1] : c < r[1]);
}

struct Detection {
  double score;
  bool tp;
};

BucketResult bucket(const std::vector<Prepared>& images,
                    const BucketFilter& filter, double threshold) {
  std::vector<Detection> dets;
  int positives = 0;
  for (const auto& im : images) {
    if (!image_selected(im, filter)) continue;
    const std::size_t ng = im.gt_area.size();
    std::vector<bool> ignored(ng), taken(ng, false);
    for (std::size_t g = 0; g < ng; ++g) {
      ignored[g] = !in_range(im.gt_area[g], filter.area);
      positives += !ignored[g];
    }
    for (std::size_t p = 0; p < im.pred_score.size(); ++p) {
      // Non-ignored ground truths take precedence over ignored ones.
      int best = -1;
      double best_oks = 0;
      for (std::size_t g = 0; g < ng; ++g) {
        if (taken[g]) continue;
        const double o = im.oks[p * ng + g];
        if (o < threshold) continue;
        const bool better =
            best < 0 || (ignored[best] && !ignored[g]) ||
            (ignored[best] == ignored[g] && o > best_oks);
        if (better) {
          best = static_cast<int>(g);
          best_oks = o;
        }
      }
      if (best >= 0) {
        taken[best] = true;
        if (!ignored[best]) dets.push_back({im.pred_score[p], true});
      } else if (in_range(im.pred_area[p], filter.area)) {
        dets.push_back({im.pred_score[p], false});
      }
    }
  }
  if (positives == 0) return {};

  std::stable_sort(dets.begin(), dets.end(),
                   [](const Detection& a, const Detection& b) {
                     return a.score > b.score;
                   });
  const std::size_t nd = dets.size();
  std::vector<double> precision(nd), recall(nd);
  int tp = 0, fp = 0;
  for (std::size_t i = 0; i < nd; ++i) {
    (dets[i].tp ? tp : fp) += 1;
    recall[i] = static_cast<double>(tp) / positives;
    precision[i] = static_cast<double>(tp) / (tp + fp);
  }
  for (std::size_t i = nd; i-- > 1;) {
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  }
  double sum = 0;
  for (int r = 0; r <= 100; ++r) {
    const double level = r / 100.0;
    const auto it = std::lower_bound(recall.begin(), recall.end(), level);
    if (it != recall.end()) sum += precision[it - recall.begin()];
  }
  return {sum / 101.0, nd ? recall.back() : 0.0};
}

std::optional<double> mean(const std::array<std::optional<double>, 10>& v) {
  double acc = 0;
  for (const auto& x : v) {
    if (!x) return std::nullopt;
    acc += *x;
  }
  return acc / 10.0;
}

struct Summary {
  std::array<std::optional<double>, 10> ap{};
  std::optional<double> mean_ap, mean_ar;
};

Summary summarize(const std::vector<Prepared>& images,
                  const BucketFilter& filter) {
  Summary s;
  std::array<std::optional<double>, 10> ar{};
  for (int j = 0; j < 10; ++j) {
    const BucketResult b = bucket(images, filter, oks_threshold(j));
    s.ap[j] = b.ap;
    ar[j] = b.ar;
  }
  s.mean_ap = mean(s.ap);
  s.mean_ar = mean(ar);
  return s;
}

}  // namespace

BucketResult evaluate_bucket(const std::vector<ImageEval>& images,
                             const EvalSettings& settings,
                             const BucketFilter& filter, double threshold) {
  return bucket(prepare(images, settings), filter, threshold);
}

EvalResult evaluate(const std::vector<ImageEval>& images,
                    const EvalSettings& settings) {
  settings.oks.validate();
  const auto prepared = prepare(images, settings);
  EvalResult r;
  for (const auto& p : prepared) {
    r.gt_count += static_cast<int>(p.gt_area.size());
    r.pred_count += static_cast<int>(p.pred_score.size());
  }
  const Summary all = summarize(prepared, BucketFilter{});
  r.ap_per_threshold = all.ap;
  r.ap = all.mean_ap;
  r.ap50 = all.ap[0];
  r.ap75 = all.ap[5];
  r.ar = all.mean_ar;

  if (settings.style == EvalStyle::kCoco) {
    BucketFilter f;
    f.area = settings.area_medium;
    const Summary m = summarize(prepared, f);
    f.area = settings.area_large;
    const Summary l = summarize(prepared, f);
    r.ap_medium = m.mean_ap;
    r.ar_medium = m.mean_ar;
    r.ap_large = l.mean_ap;
    r.ar_large = l.mean_ar;
  } else {
    const auto& e = settings.crowd_edges;
    BucketFilter f;
    f.crowd = std::array<double, 2>{e[0], e[1]};
    r.ap_easy = summarize(prepared, f).mean_ap;
    f.crowd = std::array<double, 2>{e[1], e[2]};
    r.ap_medium_crowd = summarize(prepared, f).mean_ap;
    f.crowd = std::array<double, 2>{e[2], e[3]};
    f.crowd_hi_closed = true;
    r.ap_hard = summarize(prepared, f).mean_ap;
  }
  return r;
}

std::string format_eval_table(const EvalResult& r, EvalStyle style) {
  std::vector<std::pair<const char*, std::optional<double>>> cols = {
      {"AP", r.ap}, {"AP50", r.ap50}, {"AP75", r.ap75}};
  if (style == EvalStyle::kCoco) {
    cols.insert(cols.end(), {{"APM", r.ap_medium},
                             {"APL", r.ap_large},
                             {"AR", r.ar},
                             {"ARM", r.ar_medium},
                             {"ARL", r.ar_large}});
  } else {
    cols.insert(cols.end(), {{"APE", r.ap_easy},
                             {"APM", r.ap_medium_crowd},
                             {"APH", r.ap_hard}});
  }
  std::ostringstream head, row;
  for (const auto& [name, v] : cols) {
    head << std::setw(8) << name;
    if (v) {
      row << std::setw(8) << std::fixed << std::setprecision(3) << *v;
    } else {
      row << std::setw(8) << "-";
    }
  }
  return head.str() + "\n" + row.str() + "\n";
}

}  // namespace bapose
