#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "bapose/model.h"
#include "bapose/pose.h"
#include "bapose/random.h"
#include "bapose/targets.h"

namespace bapose {

struct TrainConfig {
  int epochs = 140;
  double lr = 1e-3;
  std::vector<int> lr_steps{90, 120};
  double lr_factor = 0.1;
  double rotation = 30;      // degrees, symmetric range
  double scale_min = 0.75;
  double scale_max = 1.5;
  double translation = 40;   // image pixels, symmetric range per axis
  double heat_weight = 1.0;
  double offset_weight = 0.03;
  std::string optimizer = "adam";
  std::uint64_t seed = 0;
  bool augment = true;
  double sigma = 3.0;
  int offset_radius = 4;
  int checkpoint_every = 0;  // epochs; 0 keeps only the final checkpoint

  void validate() const;
};

// Base rate multiplied by the decay factor once per step epoch already
// reached.
double lr_at_epoch(int epoch, const TrainConfig& cfg);

template <typename T>
struct LossValue {
  double value = 0;
  BasicTensor<T> grad;  // d value / d pred
};

// Mean squared error over every entry.
template <typename T>
LossValue<T> heatmap_loss(const BasicTensor<T>& pred,
                          const BasicTensor<T>& target);

// Smooth-L1 of (pred - target) / norm on masked entries, averaged over the
// active entries; 0 when the mask is empty. norm is (N, 1, h, w).
template <typename T>
LossValue<T> offset_loss(const BasicTensor<T>& pred,
                         const BasicTensor<T>& target,
                         const BasicTensor<T>& mask,
                         const BasicTensor<T>& norm);

struct LossBreakdown {
  double heat = 0;
  double offset = 0;
  double total = 0;
};

template <typename T>
struct TrainingTargets {
  BasicTensor<T> heatmaps;
  BasicTensor<T> offsets;
  BasicTensor<T> mask;
  BasicTensor<T> norm;
};

// heat_weight * heatmap_loss + offset_weight * offset_loss, with the
// gradient w.r.t. both network outputs written to dout.
template <typename T>
LossBreakdown total_loss(const DWaspOutput<T>& out,
                         const TrainingTargets<T>& targets,
                         const TrainConfig& cfg, DWaspOutput<T>* dout);

// ---- augmentation ---------------------------------------------------------

struct AffineParams {
  double rotation = 0;  // degrees
  double scale = 1;
  double tx = 0;
  double ty = 0;
};

// Row-major 2x3 matrix acting on (x, y, 1).
using Affine = std::array<double, 6>;

AffineParams sample_affine(Rng& rng, const TrainConfig& cfg);

// Rotation and isotropic scale about the image centre ((w-1)/2, (h-1)/2),
// followed by the translation.
Affine affine_matrix(const AffineParams& p, int width, int height);
Affine invert(const Affine& m);

struct TrainSample {
  Tensor image;  // (1, 3, H, W) in [0, 1]
  std::vector<PersonAnnotation> people;  // image coordinates
};

// Warps the image by inverse mapping with bilinear sampling (zero outside)
// and maps keypoints forward; keypoints leaving the canvas become unlabeled.
TrainSample apply_affine(const TrainSample& s, const Affine& m);
TrainSample augment_sample(const TrainSample& s, Rng& rng,
                           const TrainConfig& cfg);

// Heatmap and offset targets for a sample at the model's output resolution.
TrainingTargets<float> make_targets(const TrainSample& s, const ModelConfig& mc,
                                    const TrainConfig& tc);

// ---- optimizer ------------------------------------------------------------

// Adaptive-moment state; m and v follow the model's visit order.
struct OptimState {
  std::uint64_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  static OptimState zeros_like(const Model<float>& model);
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

// One bias-corrected adaptive-moment update.
void optim_step(Model<float>& model, const Model<float>& grad,
                OptimState& state, double lr);

// ---- loop -----------------------------------------------------------------

struct EpochLog {
  int epoch = 0;  // 1-based
  double lr = 0;
  double heat = 0;
  double offset = 0;
  double total = 0;
};

// "epoch<TAB>lr<TAB>heat_loss<TAB>off_loss<TAB>total"
std::string format_epoch_log(const EpochLog& e);

struct TrainState {
  Model<float> model;
  OptimState optim;
  int epoch = 0;  // epochs completed
};

// Runs the remaining epochs (state.epoch .. cfg.epochs - 1). Each epoch
// shuffles the samples with a generator seeded from (seed, epoch), then per
// sample augments, renders targets, runs forward and backward and steps the
// optimizer. on_epoch is called after every epoch. Throws NumericError on a
// non-finite loss.
void train_loop(const std::vector<TrainSample>& data, TrainState& state,
                const ModelConfig& mc, const TrainConfig& tc,
                const std::function<void(const EpochLog&, const TrainState&)>&
                    on_epoch = {});

}  // namespace bapose
