#pragma once

#include <cstdint>
#include <string>

#include "bapose/backbone.h"
#include "bapose/dwasp.h"

namespace bapose {

struct ModelConfig {
  PyramidConfig pyramid;
  DWaspConfig dwasp;

  DWaspWidths widths() const { return resolve_widths(dwasp, pyramid); }
};

template <typename T>
struct Model {
  BackboneWeights<T> backbone;
  DWaspWeights<T> dwasp;

  static Model zeros(const ModelConfig& cfg);

  template <typename F>
  void visit(F&& f) {
    backbone.visit(f);
    dwasp.visit(f);
  }
  template <typename F>
  void visit(F&& f) const {
    backbone.visit(f);
    dwasp.visit(f);
  }

  std::size_t parameter_count() const;
};

// He-normal convolution weights, zero biases, identity offset predictors.
template <typename T>
Model<T> init_model(const ModelConfig& cfg, std::uint64_t seed);

template <typename U, typename T>
Model<U> model_cast(const Model<T>& m, const ModelConfig& cfg) {
  Model<U> out = Model<U>::zeros(cfg);
  std::vector<const BasicTensor<T>*> src;
  m.visit([&](const std::string&, const BasicTensor<T>& t) { src.push_back(&t); });
  std::size_t i = 0;
  out.visit([&](const std::string&, BasicTensor<U>& t) {
    t = tensor_cast<U>(*src.at(i++));
  });
  return out;
}

template <typename T>
struct ModelTrace {
  BackboneTrace<T> backbone;
  DWaspTrace<T> dwasp;
};

template <typename T>
DWaspOutput<T> model_forward(const BasicTensor<T>& image, const Model<T>& m,
                             const ModelConfig& cfg,
                             ModelTrace<T>* trace = nullptr);

// Accumulates parameter gradients of a scalar loss into grad, given the
// loss gradient w.r.t. the module outputs. Returns d loss / d image.
template <typename T>
BasicTensor<T> model_backward(const ModelTrace<T>& trace, const Model<T>& m,
                    const ModelConfig& cfg, const DWaspOutput<T>& dout,
                    Model<T>& grad);

}  // namespace bapose
