#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "bapose/pose.h"

namespace bapose {

// Per-keypoint falloff constants k_i.
struct OksParams {
  std::vector<double> falloff;

  void validate() const;  // non-empty, every k_i finite and > 0
};

// Keypoint similarity of a prediction to a ground truth with scale
// s = sqrt(area). Only labeled ground-truth keypoints count. Throws
// NumericError when none is labeled and ShapeError on a keypoint-count
// mismatch.
double oks(const PoseInstance& pred, const PersonAnnotation& gt,
           const OksParams& params);

// Greedy matching at one threshold: predictions are visited in the given
// order (callers sort by descending score) and each takes the unmatched
// ground truth of highest OKS >= t; the first such ground truth wins ties.
// Returns, per prediction, the index of the matched ground truth or -1.
std::vector<int> match_and_score(const std::vector<PoseInstance>& preds,
                                 const std::vector<PersonAnnotation>& gts,
                                 double threshold, const OksParams& params);

enum class EvalStyle { kCoco, kCrowdPose };

std::string to_string(EvalStyle s);
EvalStyle parse_eval_style(const std::string& s);

struct EvalSettings {
  EvalStyle style = EvalStyle::kCoco;
  OksParams oks;
  int max_detections = 20;  // per image, highest scores kept
  // Inclusive area ranges (image pixels squared).
  std::array<double, 2> area_medium{32.0 * 32.0, 96.0 * 96.0};
  std::array<double, 2> area_large{96.0 * 96.0, 1e10};
  // Crowd-index bucket edges: easy [e0, e1), medium [e1, e2), hard [e2, e3].
  std::array<double, 4> crowd_edges{0.0, 0.1, 0.8, 1.0};
};

struct ImageEval {
  int image_id = 0;
  std::optional<double> crowd_index;
  std::vector<PersonAnnotation> gts;
  std::vector<PoseInstance> preds;
};

// Metrics of one subset (all people, an area range or a crowd bucket).
// Undefined when the subset contains no ground truth.
struct BucketResult {
  std::optional<double> ap;
  std::optional<double> ar;
};

// Every metric is empty when its subset has no ground truth.
struct EvalResult {
  std::optional<double> ap;  // mean over OKS thresholds 0.50:0.05:0.95
  std::optional<double> ap50, ap75, ar;
  std::optional<double> ap_medium, ap_large, ar_medium, ar_large;
  std::optional<double> ap_easy, ap_medium_crowd, ap_hard;
  std::array<std::optional<double>, 10> ap_per_threshold{};
  int gt_count = 0;
  int pred_count = 0;
};

// OKS threshold j of the ten used for AP: (50 + 5 j) / 100.
double oks_threshold(int j);

// Interpolated precision at the 101 recall points 0, 0.01, ..., 1 averaged
// per threshold. Ground truths without labeled keypoints are skipped.
EvalResult evaluate(const std::vector<ImageEval>& images,
                    const EvalSettings& settings);

// A subset of people: ground truths outside the inclusive area range are
// ignored, and with a crowd range only images whose crowd index lies in
// [lo, hi) (or [lo, hi] when hi_closed) take part.
struct BucketFilter {
  std::array<double, 2> area{0.0, 1e10};
  std::optional<std::array<double, 2>> crowd;
  bool crowd_hi_closed = false;
};

// AP and recall of one subset at one threshold.
BucketResult evaluate_bucket(const std::vector<ImageEval>& images,
                             const EvalSettings& settings,
                             const BucketFilter& filter, double threshold);

// Two-line table: COCO style "AP AP50 AP75 APM APL AR ARM ARL", crowd style
// "AP AP50 AP75 APE APM APH", values as fractions with three decimals and
// "-" where undefined.
std::string format_eval_table(const EvalResult& r, EvalStyle style);

// Bounding-box area of the predicted keypoints (used for area ranges).
double keypoint_box_area(const PoseInstance& p);

}  // namespace bapose
