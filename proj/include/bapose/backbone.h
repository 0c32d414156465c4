#pragma once

#include <array>
#include <string>
#include <vector>

#include "bapose/layers.h"
#include "bapose/tensor.h"

namespace bapose {

// Miniature stand-in for the high-resolution feature extractor. A stem of
// stride-2 3x3 convolutions reaches the base resolution; level 0 is computed
// from the stem at stride 1 and each further level halves the previous one.
struct PyramidConfig {
  std::array<int, 4> widths{32, 64, 128, 256};
  int stem_width = 64;
  int base_stride = 4;  // power of two >= 2; one stem conv per factor of 2
  int blocks = 1;       // convolutions per level (first one is the transition)

  void validate() const;
  int stem_convs() const;
  int fused_width() const { return widths[0] + widths[1] + widths[2] + widths[3]; }
  // Input extents must be multiples of this.
  int input_multiple() const { return 8 * base_stride; }
};

template <typename T>
struct FeaturePyramid {
  std::array<BasicTensor<T>, 4> levels;  // strides 1, 2, 4, 8 w.r.t. base
  BasicTensor<T> low_level;              // stem output, base resolution
};

template <typename T>
struct BackboneWeights {
  std::vector<ConvParams<T>> stem;
  std::array<std::vector<ConvParams<T>>, 4> levels;

  static BackboneWeights zeros(const PyramidConfig& cfg);

  template <typename F>
  void visit(F&& f) { visit_impl(*this, f); }
  template <typename F>
  void visit(F&& f) const { visit_impl(*this, f); }

 private:
  template <typename Self, typename F>
  static void visit_impl(Self& self, F& f) {
    for (std::size_t i = 0; i < self.stem.size(); ++i) {
      visit_conv("backbone.stem" + std::to_string(i), self.stem[i], f);
    }
    for (std::size_t l = 0; l < 4; ++l) {
      for (std::size_t b = 0; b < self.levels[l].size(); ++b) {
        visit_conv("backbone.level" + std::to_string(l) + ".conv" +
                       std::to_string(b),
                   self.levels[l][b], f);
      }
    }
  }
};

// Intermediate activations kept for the backward pass.
template <typename T>
struct BackboneTrace {
  BasicTensor<T> image;
  std::vector<BasicTensor<T>> stem_out;  // post-ReLU output of each stem conv
  std::array<std::vector<BasicTensor<T>>, 4> level_out;
};

// Rejects extents that are not multiples of cfg.input_multiple().
void check_backbone_input(const Shape& image, const PyramidConfig& cfg);

template <typename T>
FeaturePyramid<T> backbone_forward(const BasicTensor<T>& image,
                                   const BackboneWeights<T>& w,
                                   const PyramidConfig& cfg,
                                   BackboneTrace<T>* trace = nullptr);

// Accumulates weight gradients into grad given gradients of every pyramid
// output (empty tensors count as zero). Returns d loss / d image.
template <typename T>
BasicTensor<T> backbone_backward(const BackboneTrace<T>& trace,
                                 const BackboneWeights<T>& w,
                                 const FeaturePyramid<T>& dout,
                                 BackboneWeights<T>& grad);

}  // namespace bapose
