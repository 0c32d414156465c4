#include "bapose/synthetic.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "bapose/error.h"

namespace bapose {

namespace {

constexpr double kTwoPi = 2 * std::numbers::pi;

std::array<float, 3> joint_colour(int k, int keypoints) {
  // Evenly spaced hues at full saturation.
  const double h = 6.0 * k / std::max(keypoints, 1);
  const int sector = static_cast<int>(h) % 6;
  const float f = static_cast<float>(h - std::floor(h));
  switch (sector) {
    case 0: return {1, f, 0};
    case 1: return {1 - f, 1, 0};
    case 2: return {0, 1, f};
    case 3: return {0, 1 - f, 1};
    case 4: return {f, 0, 1};
    default: return {1, 0, 1 - f};
  }
}

void paint_disc(Tensor& img, double cx, double cy, double radius,
                const std::array<float, 3>& rgb) {
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - radius)));
  const int x1 = std::min(img.w() - 1, static_cast<int>(std::ceil(cx + radius)));
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - radius)));
  const int y1 = std::min(img.h() - 1, static_cast<int>(std::ceil(cy + radius)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      if ((x - cx) * (x - cx) + (y - cy) * (y - cy) > radius * radius) continue;
      for (int c = 0; c < 3; ++c) img(0, c, y, x) = rgb[c];
    }
  }
}

void paint_line(Tensor& img, double ax, double ay, double bx, double by,
                double width, const std::array<float, 3>& rgb) {
  const double dx = bx - ax, dy = by - ay;
  const double len2 = dx * dx + dy * dy;
  const int x0 = std::max(0, static_cast<int>(std::floor(std::min(ax, bx) - width)));
  const int x1 = std::min(img.w() - 1,
                          static_cast<int>(std::ceil(std::max(ax, bx) + width)));
  const int y0 = std::max(0, static_cast<int>(std::floor(std::min(ay, by) - width)));
  const int y1 = std::min(img.h() - 1,
                          static_cast<int>(std::ceil(std::max(ay, by) + width)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      double t = len2 > 0 ? ((x - ax) * dx + (y - ay) * dy) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      const double px = ax + t * dx - x, py = ay + t * dy - y;
      if (px * px + py * py > width * width) continue;
      for (int c = 0; c < 3; ++c) img(0, c, y, x) = rgb[c];
    }
  }
}

}  // namespace

std::vector<PersonAnnotation> synthetic_people(Rng& rng,
                                               const PeopleParams& p) {
  const int count = p.min_people +
                    static_cast<int>(rng.below(p.max_people - p.min_people + 1));
  for (int attempt = 0; attempt < 1000; ++attempt) {
    std::vector<PersonAnnotation> people;
    std::vector<std::pair<double, double>> centres;
    for (int i = 0; i < count; ++i) {
      PersonAnnotation a;
      a.id = i + 1;
      const double radius = rng.uniform(p.min_radius, p.max_radius);
      const double reach = radius * 1.2 + p.margin;
      const double cx = rng.uniform(reach, p.width - 1 - reach);
      const double cy = rng.uniform(reach, p.height - 1 - reach);
      const double spin = rng.uniform(0, kTwoPi);
      double sx = 0, sy = 0;
      for (int k = 0; k < p.keypoints; ++k) {
        const double ang = spin + kTwoPi * k / p.keypoints +
                           rng.uniform(-0.2, 0.2);
        const double r = radius * rng.uniform(0.8, 1.2);
        Keypoint kp{cx + r * std::cos(ang), cy + r * std::sin(ang), 2};
        if (rng.uniform() < p.unlabeled_fraction) kp.v = 0;
        a.keypoints.push_back(kp);
      }
      if (a.labeled_count() == 0) a.keypoints[0].v = 2;
      labeled_centroid(a, sx, sy);
      double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
      for (const auto& kp : a.keypoints) {
        x0 = std::min(x0, kp.x);
        x1 = std::max(x1, kp.x);
        y0 = std::min(y0, kp.y);
        y1 = std::max(y1, kp.y);
      }
      const double pad = radius * 0.25;
      a.bbox = {x0 - pad, y0 - pad, x1 - x0 + 2 * pad, y1 - y0 + 2 * pad};
      a.area = a.bbox[2] * a.bbox[3];
      centres.emplace_back(sx, sy);
      people.push_back(std::move(a));
    }
    bool ok = true;
    for (std::size_t i = 0; ok && i < centres.size(); ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        const double dx = centres[i].first - centres[j].first;
        const double dy = centres[i].second - centres[j].second;
        if (std::hypot(dx, dy) < p.min_center_distance) {
          ok = false;
          break;
        }
      }
    }
    if (ok) return people;
  }
  throw NumericError("synthetic_people: could not place " +
                     std::to_string(count) + " people on a " +
                     std::to_string(p.width) + "x" + std::to_string(p.height) +
                     " canvas");
}

std::vector<std::pair<int, int>> synthetic_skeleton(int keypoints) {
  std::vector<std::pair<int, int>> out;
  if (keypoints < 2) return out;
  for (int k = 0; k < keypoints; ++k) {
    const int next = (k + 1) % keypoints;
    if (keypoints == 2 && next == 0) break;
    out.emplace_back(k, next);
  }
  return out;
}

Tensor draw_people(const std::vector<PersonAnnotation>& people, int width,
                   int height) {
  Tensor img(Shape{1, 3, height, width}, 0.05f);
  const std::array<float, 3> grey{0.45f, 0.45f, 0.45f};
  for (const auto& a : people) {
    const int k = static_cast<int>(a.keypoints.size());
    for (const auto& [i, j] : synthetic_skeleton(k)) {
      paint_line(img, a.keypoints[i].x, a.keypoints[i].y, a.keypoints[j].x,
                 a.keypoints[j].y, 0.6, grey);
    }
  }
  for (const auto& a : people) {
    const int k = static_cast<int>(a.keypoints.size());
    for (int i = 0; i < k; ++i) {
      paint_disc(img, a.keypoints[i].x, a.keypoints[i].y, 1.6,
                 joint_colour(i, k));
    }
  }
  return img;
}

Tensor draw_overlay(const Tensor& image, const std::vector<PoseInstance>& poses,
                    const std::vector<std::pair<int, int>>& skeleton,
                    double min_score) {
  Tensor out = image;
  const std::array<float, 3> limb{1.0f, 1.0f, 0.2f};
  const std::array<float, 3> marker{1.0f, 0.1f, 0.1f};
  for (const auto& p : poses) {
    if (p.score < min_score) continue;
    const int k = static_cast<int>(p.keypoints.size());
    for (const auto& [a, b] : skeleton) {
      if (a >= k || b >= k) continue;
      paint_line(out, p.keypoints[a].x, p.keypoints[a].y, p.keypoints[b].x,
                 p.keypoints[b].y, 0.5, limb);
    }
    for (const auto& kp : p.keypoints) paint_disc(out, kp.x, kp.y, 1.5, marker);
  }
  return out;
}

std::vector<TrainSample> synthetic_dataset(Rng& rng, int count,
                                           const PeopleParams& p) {
  std::vector<TrainSample> out;
  for (int i = 0; i < count; ++i) {
    TrainSample s;
    s.people = synthetic_people(rng, p);
    for (auto& a : s.people) {
      a.image_id = i + 1;
      a.id = i * 100 + a.id;
    }
    s.image = draw_people(s.people, p.width, p.height);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace bapose
