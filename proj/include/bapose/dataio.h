#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bapose/metrics.h"
#include "bapose/model.h"
#include "bapose/pose.h"
#include "bapose/tensor.h"
#include "bapose/train.h"

namespace bapose {

// ---- annotations ----------------------------------------------------------

struct ImageRecord {
  int id = 0;
  std::string file_name;
  int height = 0;
  int width = 0;
  std::optional<double> crowd_index;
};

struct Dataset {
  std::vector<ImageRecord> images;
  std::vector<PersonAnnotation> annotations;
  std::vector<std::string> keypoint_names;
  std::vector<std::pair<int, int>> skeleton;  // 0-based joint pairs

  int keypoints() const { return static_cast<int>(keypoint_names.size()); }
  // crowdpose-style when any image carries a crowd index, else coco-style.
  std::string source() const;
  const ImageRecord* find_image(int id) const;
  std::vector<PersonAnnotation> people_in(int image_id) const;
};

// JSON with "images" [{id, file_name, height, width, crowd_index?}],
// "annotations" [{id, image_id, area, bbox, keypoints}] and "categories"
// [{name, keypoints [names], skeleton? [[a, b], ...] 1-based}].
// Errors name the offending record.
Dataset parse_annotations(std::string_view text);
std::string serialize_annotations(const Dataset& d);

// ---- results --------------------------------------------------------------

struct ImageResult {
  int image_id = 0;
  PoseInstance pose;
};

// JSON list of {image_id, category_id, keypoints [x, y, score] * K, score};
// every score must be finite and within [0, 1].
std::vector<ImageResult> parse_results(std::string_view text,
                                       int keypoints = -1);
std::string serialize_results(const std::vector<ImageResult>& results);

// ---- raw tensors ----------------------------------------------------------

// "BAT1", four little-endian u32 extents (N, C, H, W), then little-endian
// float32 values in row-major order.
std::string write_tensor(const Tensor& t);
Tensor read_tensor(std::string_view bytes);
// Reads one dump starting at pos and advances pos past it.
Tensor read_tensor_at(std::string_view bytes, std::size_t& pos);

// ---- images ---------------------------------------------------------------

// Binary P6 with maxval 255, returned as (1, 3, H, W) holding v / 255.
Tensor read_image_ppm(std::string_view bytes);
// Values are clamped to [0, 1] and rounded to 8 bits.
std::string write_image_ppm(const Tensor& image);

// ---- checkpoints ----------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  Model<float> model;
  OptimState optim;
  int epoch = 0;
};

// "BAC1", u32 version, u64 architecture fingerprint, u32 epoch, u64
// optimizer step, u32 entry count, then per entry a u32 name length, the
// name and a tensor dump. Weights come first in visit order, followed by the
// optimizer moments as adam.m/<name> and adam.v/<name>.
std::string save_checkpoint(const Checkpoint& c, const ModelConfig& cfg);
// Rejects a version, fingerprint, name or shape mismatch.
Checkpoint load_checkpoint(std::string_view bytes, const ModelConfig& cfg);

// ---- datasets on disk -----------------------------------------------------

// Zero-pads the bottom and right edges up to the next multiple of `multiple`.
Tensor pad_image(const Tensor& image, int multiple);

// Every image of the dataset read from dir/<file_name> (binary PPM), padded
// for the backbone, with its people. Annotations stay in image pixels.
std::vector<TrainSample> load_training_set(const Dataset& d,
                                           const std::string& dir,
                                           int multiple);

// Ground truth and predictions grouped per dataset image. Results naming an
// image that is not in the dataset are rejected.
std::vector<ImageEval> join_results(const Dataset& d,
                                    const std::vector<ImageResult>& results);

// ---- files ----------------------------------------------------------------

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view bytes);

}  // namespace bapose
