#pragma once

// Analytic-versus-numeric gradient suites, all in 64-bit.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "bapose/model.h"
#include "bapose/tensor.h"

namespace bapose::check {

struct GradCheckOptions {
  double step = 1e-6;
  double tolerance = 1e-6;
  std::uint64_t seed = 1;
};

struct GradCheck {
  std::string name;
  double error = 0;        // norm-wise relative error over smooth coordinates
  std::size_t coords = 0;
  std::size_t kinks = 0;   // coordinates whose step straddled a kink
  bool passed = false;
};

// Central differences of f at x compared with `analytic`. A coordinate whose
// forward and backward one-sided slopes disagree by far more than curvature
// allows straddled a ReLU or bilinear kink within +-step; such coordinates
// are counted and left out, and more than 1% of them fails the check.
GradCheck compare_gradient(const std::string& name,
                           const std::function<double(const Tensor64&)>& f,
                           const Tensor64& x, const Tensor64& analytic,
                           const GradCheckOptions& opts);

// The same test over an arbitrary coordinate list: f(j, delta) evaluates the
// function with coordinate j shifted by delta (f(0, 0) is the unshifted
// value).
GradCheck compare_coords(const std::string& name,
                         std::span<const double> analytic,
                         const std::function<double(std::size_t, double)>& f,
                         const GradCheckOptions& opts);

// Label under which the full-model check pools a parameter tensor:
// backbone.stem<i>, backbone.level<l>, dwasp, heads.kp or heads.off.
std::string parameter_group(const std::string& name);

// One check per differentiable kernel and layer: conv2d, pooling, resize,
// sampling, concatenation, activations, adaptive convolution, offset
// prediction, backbone, waterfall, low-level fusion, heads and both losses.
std::vector<GradCheck> layer_gradient_checks(const GradCheckOptions& opts);

// Toy model used by the full-model check: pyramid widths 4/8/16/32 at an
// 8 x 8 base resolution (32 x 32 input) and small module widths.
ModelConfig gradcheck_model_config(int keypoints = 3);

// Random weights everywhere, including offset predictors whose sampling
// positions are moved off the pixel lattice.
Model<double> random_model(const ModelConfig& cfg, std::uint64_t seed);

// Total training loss of the whole network against random targets,
// differentiated w.r.t. every parameter group and the input image.
std::vector<GradCheck> model_gradient_checks(const ModelConfig& cfg,
                                             const GradCheckOptions& opts);

}  // namespace bapose::check
