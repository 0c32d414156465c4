#include "bapose/decode.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "bapose/error.h"
#include "bapose/ops.h"

namespace bapose {

void DecodeConfig::validate() const {
  std::ostringstream os;
  if (!(center_threshold >= 0 && center_threshold <= 1)) {
    os << "decode.center_threshold must lie in [0, 1], got "
       << center_threshold;
  } else if (nms_window < 1 || nms_window % 2 == 0) {
    os << "decode.nms_window must be a positive odd number, got "
       << nms_window;
  } else if (max_instances < 1) {
    os << "decode.max_instances must be positive, got " << max_instances;
  } else if (!(dedup_oks > 0 && dedup_oks <= 1)) {
    os << "decode.dedup_oks must lie in (0, 1], got " << dedup_oks;
  } else {
    return;
  }
  throw ConfigError(os.str());
}

std::vector<Peak> nms_peaks(std::span<const float> plane, int h, int w,
                            const DecodeConfig& cfg) {
  if (plane.size() != static_cast<std::size_t>(h) * w) {
    throw ShapeError("nms_peaks: plane size does not match extents");
  }
  const int r = cfg.nms_window / 2;
  std::vector<Peak> peaks;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const float v = plane[static_cast<std::size_t>(y) * w + x];
      if (!(v >= cfg.center_threshold)) continue;
      bool peak = true;
      for (int yy = std::max(0, y - r); peak && yy <= std::min(h - 1, y + r);
           ++yy) {
        for (int xx = std::max(0, x - r); xx <= std::min(w - 1, x + r); ++xx) {
          if (yy == y && xx == x) continue;
          const float u = plane[static_cast<std::size_t>(yy) * w + xx];
          const bool earlier = yy < y || (yy == y && xx < x);
          if (u > v || (u == v && earlier)) {
            peak = false;
            break;
          }
        }
      }
      if (peak) peaks.push_back({x, y, v});
    }
  }
  std::stable_sort(peaks.begin(), peaks.end(),
                   [](const Peak& a, const Peak& b) { return a.score > b.score; });
  if (peaks.size() > static_cast<std::size_t>(cfg.max_instances)) {
    peaks.resize(cfg.max_instances);
  }
  return peaks;
}

namespace {

double joint_score(const Tensor& heat, int n, int k, double x, double y) {
  const double v = sample_plane<float>(heat.plane(n, k).data(), heat.h(),
                                       heat.w(), static_cast<float>(y),
                                       static_cast<float>(x));
  return std::clamp(v, 0.0, 1.0);
}

void finish_instance(PoseInstance& inst, double center_score) {
  double mean = 0;
  for (const auto& k : inst.keypoints) mean += k.score;
  if (!inst.keypoints.empty()) mean /= inst.keypoints.size();
  inst.score = center_score * mean;
}

PersonAnnotation as_reference(const PoseInstance& p) {
  PersonAnnotation a;
  for (const auto& k : p.keypoints) a.keypoints.push_back({k.x, k.y, 2});
  a.area = std::max(keypoint_box_area(p), 1.0);
  return a;
}

}  // namespace

std::vector<PoseInstance> decode_poses(const DWaspOutput<float>& out,
                                       const DecodeConfig& cfg,
                                       const OksParams& oks_params,
                                       OffsetMode mode, int n) {
  cfg.validate();
  const Tensor& heat = out.heatmaps;
  const Tensor& off = out.offsets;
  const int k_count = heat.c() - 1;
  const int expect = mode == OffsetMode::kPerKeypoint ? 2 * k_count : 2;
  if (k_count < 1 || off.c() != expect || off.h() != heat.h() ||
      off.w() != heat.w() || n < 0 || n >= heat.n() || off.n() != heat.n()) {
    throw ShapeError("decode_poses: heatmaps " + heat.shape().str() +
                     " and offsets " + off.shape().str() +
                     " do not form a " + to_string(mode) + " output");
  }
  if (oks_params.falloff.size() != static_cast<std::size_t>(k_count)) {
    throw ConfigError("decode_poses: falloff table has " +
                      std::to_string(oks_params.falloff.size()) +
                      " entries for " + std::to_string(k_count) +
                      " keypoints");
  }
  const int h = heat.h(), w = heat.w();
  const auto centers = nms_peaks(heat.plane(n, k_count), h, w, cfg);

  std::vector<PoseInstance> found;
  if (mode == OffsetMode::kPerKeypoint) {
    for (const Peak& c : centers) {
      PoseInstance inst;
      for (int k = 0; k < k_count; ++k) {
        const double x = c.x + off(n, 2 * k, c.y, c.x);
        const double y = c.y + off(n, 2 * k + 1, c.y, c.x);
        inst.keypoints.push_back({x, y, joint_score(heat, n, k, x, y)});
      }
      finish_instance(inst, c.score);
      found.push_back(std::move(inst));
    }
  } else {
    // Joint peaks vote for the centre their offset points at; each person
    // keeps its best-scoring voter per joint.
    found.resize(centers.size());
    for (std::size_t i = 0; i < centers.size(); ++i) {
      for (int k = 0; k < k_count; ++k) {
        found[i].keypoints.push_back(
            {double(centers[i].x), double(centers[i].y),
             joint_score(heat, n, k, centers[i].x, centers[i].y)});
      }
    }
    for (int k = 0; k < k_count && !centers.empty(); ++k) {
      std::vector<bool> claimed(centers.size(), false);
      for (const Peak& j : nms_peaks(heat.plane(n, k), h, w, cfg)) {
        const double vx = j.x + off(n, 0, j.y, j.x);
        const double vy = j.y + off(n, 1, j.y, j.x);
        std::size_t owner = 0;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < centers.size(); ++i) {
          const double dx = vx - centers[i].x, dy = vy - centers[i].y;
          const double d2 = dx * dx + dy * dy;
          if (d2 < best) {
            best = d2;
            owner = i;
          }
        }
        // Peaks arrive best first, so the first claim is the best one.
        if (claimed[owner]) continue;
        claimed[owner] = true;
        found[owner].keypoints[k] = {double(j.x), double(j.y), j.score};
      }
    }
    for (std::size_t i = 0; i < centers.size(); ++i) {
      finish_instance(found[i], centers[i].score);
    }
  }

  std::stable_sort(found.begin(), found.end(),
                   [](const PoseInstance& a, const PoseInstance& b) {
                     return a.score > b.score;
                   });
  std::vector<PoseInstance> kept;
  for (auto& inst : found) {
    bool duplicate = false;
    for (const auto& k : kept) {
      if (oks(inst, as_reference(k), oks_params) > cfg.dedup_oks) {
        duplicate = true;
        break;
      }
    }
    if (!duplicate) kept.push_back(std::move(inst));
  }
  return kept;
}

}  // namespace bapose
