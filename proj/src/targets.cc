#include "bapose/targets.h"

#include <cmath>
#include <limits>

#include "bapose/error.h"

namespace bapose {

namespace {

int nearest_pixel(double v) { return static_cast<int>(std::floor(v + 0.5)); }

void splat_max(float* plane, int h, int w, int cy, int cx, double sigma) {
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double d2 = double(y - cy) * (y - cy) + double(x - cx) * (x - cx);
      const float g = static_cast<float>(std::exp(-d2 * inv));
      float& dst = plane[static_cast<std::size_t>(y) * w + x];
      if (g > dst) dst = g;
    }
  }
}

void check_keypoint_count(const std::vector<PersonAnnotation>& anns, int k) {
  for (const auto& a : anns) {
    if (static_cast<int>(a.keypoints.size()) != k) {
      throw ShapeError("annotation " + std::to_string(a.id) + " has " +
                       std::to_string(a.keypoints.size()) +
                       " keypoints, expected " + std::to_string(k));
    }
  }
}

}  // namespace

Tensor render_keypoint_heatmaps(const std::vector<PersonAnnotation>& anns,
                                int keypoints, int h, int w, double sigma) {
  if (!(sigma > 0)) throw ConfigError("heatmap sigma must be positive");
  check_keypoint_count(anns, keypoints);
  Tensor out(1, keypoints + 1, h, w);
  for (const auto& a : anns) {
    double cx, cy;
    if (!labeled_centroid(a, cx, cy)) continue;
    for (int k = 0; k < keypoints; ++k) {
      const Keypoint& kp = a.keypoints[k];
      if (!kp.labeled()) continue;
      splat_max(out.plane(0, k).data(), h, w, nearest_pixel(kp.y),
                nearest_pixel(kp.x), sigma);
    }
    splat_max(out.plane(0, keypoints).data(), h, w, nearest_pixel(cy),
              nearest_pixel(cx), sigma);
  }
  return out;
}

OffsetTargets render_offset_targets(const std::vector<PersonAnnotation>& anns,
                                    int keypoints, int h, int w,
                                    OffsetMode mode, int radius) {
  check_keypoint_count(anns, keypoints);
  const int channels = mode == OffsetMode::kPerKeypoint ? 2 * keypoints : 2;
  OffsetTargets t{Tensor(1, channels, h, w), Tensor(1, channels, h, w),
                  Tensor(Shape{1, 1, h, w}, 1.f), {}};

  struct Anchor {
    int person;
    int row, col;  // rounded anchor pixel
  };
  std::vector<Anchor> anchors;
  std::vector<double> cx(anns.size()), cy(anns.size());
  std::vector<bool> usable(anns.size(), false);
  for (std::size_t p = 0; p < anns.size(); ++p) {
    const auto& a = anns[p];
    t.scale_norm.push_back(a.area > 0 ? std::sqrt(a.area) / 2.0 : 1.0);
    usable[p] = labeled_centroid(a, cx[p], cy[p]);
    if (!usable[p]) continue;
    if (mode == OffsetMode::kPerKeypoint) {
      anchors.push_back({static_cast<int>(p), nearest_pixel(cy[p]),
                         nearest_pixel(cx[p])});
    } else {
      for (const auto& kp : a.keypoints) {
        if (!kp.labeled()) continue;
        anchors.push_back({static_cast<int>(p), nearest_pixel(kp.y),
                           nearest_pixel(kp.x)});
      }
    }
  }

  const long r2 = static_cast<long>(radius) * radius;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      // Anchors are ordered by person, so a strict comparison keeps the
      // lower annotation index on equal distances.
      int owner = -1;
      long best = std::numeric_limits<long>::max();
      for (const auto& an : anchors) {
        const long d2 = long(y - an.row) * (y - an.row) +
                        long(x - an.col) * (x - an.col);
        if (d2 <= r2 && d2 < best) {
          best = d2;
          owner = an.person;
        }
      }
      if (owner < 0) continue;
      const auto& a = anns[owner];
      t.norm(0, 0, y, x) = static_cast<float>(t.scale_norm[owner]);
      if (mode == OffsetMode::kShared) {
        t.offsets(0, 0, y, x) = static_cast<float>(cx[owner] - x);
        t.offsets(0, 1, y, x) = static_cast<float>(cy[owner] - y);
        t.mask(0, 0, y, x) = t.mask(0, 1, y, x) = 1.f;
        continue;
      }
      for (int k = 0; k < keypoints; ++k) {
        const Keypoint& kp = a.keypoints[k];
        if (!kp.labeled()) continue;
        t.offsets(0, 2 * k, y, x) = static_cast<float>(kp.x - x);
        t.offsets(0, 2 * k + 1, y, x) = static_cast<float>(kp.y - y);
        t.mask(0, 2 * k, y, x) = t.mask(0, 2 * k + 1, y, x) = 1.f;
      }
    }
  }
  return t;
}

}  // namespace bapose
