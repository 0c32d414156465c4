#include "bapose/model.h"

#include "bapose/random.h"

namespace bapose {

template <typename T>
Model<T> Model<T>::zeros(const ModelConfig& cfg) {
  return {BackboneWeights<T>::zeros(cfg.pyramid),
          DWaspWeights<T>::zeros(cfg.widths())};
}

template <typename T>
std::size_t Model<T>::parameter_count() const {
  std::size_t n = 0;
  visit([&](const std::string&, const BasicTensor<T>& t) { n += t.size(); });
  return n;
}

template <typename T>
Model<T> init_model(const ModelConfig& cfg, std::uint64_t seed) {
  Model<T> m = Model<T>::zeros(cfg);
  Rng rng(seed);
  auto init = [&](ConvParams<T>& p) { p.init_he(rng); };
  for (auto& p : m.backbone.stem) init(p);
  for (auto& level : m.backbone.levels) {
    for (auto& p : level) init(p);
  }
  auto& d = m.dwasp;
  for (auto& p : d.branches) init(p);
  init(d.pool);
  init(d.waterfall);
  init(d.low_level);
  init(d.fuse);
  init(d.reduce);
  d.kp_predictor = identity_offset_predictor<T>(d.kp_predictor.cin());
  init(d.kp_adapt);
  init(d.kp_out);
  init(d.off_expand);
  for (auto& g : d.off_groups) {
    g.predictor = identity_offset_predictor<T>(g.predictor.cin());
    init(g.adapt);
    init(g.out);
  }
  return m;
}

template <typename T>
DWaspOutput<T> model_forward(const BasicTensor<T>& image, const Model<T>& m,
                             const ModelConfig& cfg, ModelTrace<T>* trace) {
  const FeaturePyramid<T> p = backbone_forward(
      image, m.backbone, cfg.pyramid, trace ? &trace->backbone : nullptr);
  return dwasp_forward(p, m.dwasp, cfg.dwasp, trace ? &trace->dwasp : nullptr);
}

template <typename T>
BasicTensor<T> model_backward(const ModelTrace<T>& trace, const Model<T>& m,
                    const ModelConfig& cfg, const DWaspOutput<T>& dout,
                    Model<T>& grad) {
  const FeaturePyramid<T> dp =
      dwasp_backward(trace.dwasp, m.dwasp, cfg.dwasp, dout, grad.dwasp);
  return backbone_backward(trace.backbone, m.backbone, dp, grad.backbone);
}

template struct Model<float>;
template struct Model<double>;
template Model<float> init_model(const ModelConfig&, std::uint64_t);
template Model<double> init_model(const ModelConfig&, std::uint64_t);
template DWaspOutput<float> model_forward(const BasicTensor<float>&,
                                          const Model<float>&,
                                          const ModelConfig&,
                                          ModelTrace<float>*);
template DWaspOutput<double> model_forward(const BasicTensor<double>&,
                                           const Model<double>&,
                                           const ModelConfig&,
                                           ModelTrace<double>*);
template Tensor model_backward(const ModelTrace<float>&, const Model<float>&,
                             const ModelConfig&, const DWaspOutput<float>&,
                             Model<float>&);
template Tensor64 model_backward(const ModelTrace<double>&, const Model<double>&,
                             const ModelConfig&, const DWaspOutput<double>&,
                             Model<double>&);

}  // namespace bapose
