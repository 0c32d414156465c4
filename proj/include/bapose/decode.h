#pragma once

#include <span>
#include <vector>

#include "bapose/dwasp.h"
#include "bapose/metrics.h"
#include "bapose/pose.h"

namespace bapose {

struct DecodeConfig {
  double center_threshold = 0.1;
  int nms_window = 3;  // odd
  int max_instances = 30;
  double dedup_oks = 0.9;

  void validate() const;
};

struct Peak {
  int x = 0;
  int y = 0;
  double score = 0;
};

// Local maxima of a single h x w plane, best first. A pixel is a peak when no
// other pixel of its window is larger or equal and earlier in row-major
// order, and its value reaches the threshold.
std::vector<Peak> nms_peaks(std::span<const float> plane, int h, int w,
                            const DecodeConfig& cfg);

// Decodes image n of a network output into pose instances in heatmap
// coordinates, best first. `oks` supplies the falloff table used for
// duplicate suppression.
std::vector<PoseInstance> decode_poses(const DWaspOutput<float>& out,
                                       const DecodeConfig& cfg,
                                       const OksParams& oks_params,
                                       OffsetMode mode = OffsetMode::kPerKeypoint,
                                       int n = 0);

}  // namespace bapose
