#pragma once

#include <array>
#include <vector>

namespace bapose {

struct Keypoint {
  double x = 0;
  double y = 0;
  int v = 0;  // 0 unlabeled, 1 labeled but occluded, 2 labeled and visible

  bool labeled() const { return v > 0; }
};

struct PersonAnnotation {
  int id = 0;
  int image_id = 0;
  std::vector<Keypoint> keypoints;
  double area = 0;
  std::array<double, 4> bbox{};  // x, y, w, h

  int labeled_count() const;
};

struct ScoredKeypoint {
  double x = 0;
  double y = 0;
  double score = 0;
};

struct PoseInstance {
  std::vector<ScoredKeypoint> keypoints;
  double score = 0;
};

// Image pixels and heatmap pixels both put integer coordinates at pixel
// centres; a heatmap pixel covers `stride` image pixels per axis.
inline double image_to_heatmap(double v, int stride) {
  return (v + 0.5) / stride - 0.5;
}
inline double heatmap_to_image(double v, int stride) {
  return (v + 0.5) * stride - 0.5;
}

// Coordinates, area and bbox mapped between the two frames.
PersonAnnotation annotation_to_heatmap(const PersonAnnotation& a, int stride);
PoseInstance instance_to_image(const PoseInstance& p, int stride);

// Mean (x, y) of the labeled keypoints; false when there are none.
bool labeled_centroid(const PersonAnnotation& a, double& x, double& y);

}  // namespace bapose
