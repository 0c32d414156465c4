#include "bapose/pose.h"

namespace bapose {

int PersonAnnotation::labeled_count() const {
  int n = 0;
  for (const auto& k : keypoints) n += k.labeled();
  return n;
}

PersonAnnotation annotation_to_heatmap(const PersonAnnotation& a, int stride) {
  PersonAnnotation out = a;
  for (auto& k : out.keypoints) {
    k.x = image_to_heatmap(k.x, stride);
    k.y = image_to_heatmap(k.y, stride);
  }
  const double s = stride;
  out.area = a.area / (s * s);
  out.bbox = {image_to_heatmap(a.bbox[0], stride),
              image_to_heatmap(a.bbox[1], stride), a.bbox[2] / s,
              a.bbox[3] / s};
  return out;
}

PoseInstance instance_to_image(const PoseInstance& p, int stride) {
  PoseInstance out = p;
  for (auto& k : out.keypoints) {
    k.x = heatmap_to_image(k.x, stride);
    k.y = heatmap_to_image(k.y, stride);
  }
  return out;
}

bool labeled_centroid(const PersonAnnotation& a, double& x, double& y) {
  double sx = 0, sy = 0;
  int n = 0;
  for (const auto& k : a.keypoints) {
    if (!k.labeled()) continue;
    sx += k.x;
    sy += k.y;
    ++n;
  }
  if (n == 0) return false;
  x = sx / n;
  y = sy / n;
  return true;
}

}  // namespace bapose
