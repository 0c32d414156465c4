#pragma once

#include <vector>

#include "bapose/dwasp.h"
#include "bapose/pose.h"
#include "bapose/tensor.h"

namespace bapose {

// Annotations here are in heatmap coordinates (see annotation_to_heatmap).

// (1, K + 1, h, w): channel k holds the pixelwise maximum over people of a
// Gaussian centred on the pixel nearest joint k; channel K does the same for
// the centroid of each person's labeled joints. Unlabeled joints and people
// without labeled joints contribute nothing.
Tensor render_keypoint_heatmaps(const std::vector<PersonAnnotation>& anns,
                                int keypoints, int h, int w,
                                double sigma = 3.0);

struct OffsetTargets {
  Tensor offsets;  // (1, 2K, h, w) per-keypoint, (1, 2, h, w) shared
  Tensor mask;     // same shape; 1 where supervised
  Tensor norm;     // (1, 1, h, w) scale normaliser of the owning person
  std::vector<double> scale_norm;  // per annotation, sqrt(area) / 2
};

// Per-keypoint mode: pixels within `radius` of a person's rounded centre hold
// (x_k - px, y_k - py) in channels (2k, 2k + 1) for every labeled joint k.
// A pixel near several centres belongs to the nearest one, the lower
// annotation index on ties.
// Shared mode: pixels within `radius` of a labeled joint's rounded position
// hold (cx - px, cy - py), the displacement to the person centre, with the
// same nearest-wins rule measured to the joints.
OffsetTargets render_offset_targets(const std::vector<PersonAnnotation>& anns,
                                    int keypoints, int h, int w,
                                    OffsetMode mode = OffsetMode::kPerKeypoint,
                                    int radius = 4);

}  // namespace bapose
