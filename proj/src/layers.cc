#include "bapose/layers.h"

#include <cmath>

namespace bapose {

template <typename T>
void ConvParams<T>::init_he(Rng& rng) {
  const int fan_in = w.c() * w.h() * w.w();
  const double stddev = fan_in > 0 ? std::sqrt(2.0 / fan_in) : 0.0;
  for (T& v : w.values()) v = static_cast<T>(rng.normal() * stddev);
  b.fill(T(0));
}

template <typename T>
BasicTensor<T> conv_apply_backward(const ConvParams<T>& p,
                                   const BasicTensor<T>& x,
                                   const ConvSpec& spec,
                                   const BasicTensor<T>& dy,
                                   ConvParams<T>& grad) {
  auto g = conv2d_backward(x, p.w, spec, dy);
  add_inplace(grad.w, g.dw);
  for (std::size_t i = 0; i < g.db.size(); ++i) grad.b[i] += g.db[i];
  return std::move(g.dx);
}

template struct ConvParams<float>;
template struct ConvParams<double>;
template BasicTensor<float> conv_apply_backward(const ConvParams<float>&,
                                                const BasicTensor<float>&,
                                                const ConvSpec&,
                                                const BasicTensor<float>&,
                                                ConvParams<float>&);
template BasicTensor<double> conv_apply_backward(const ConvParams<double>&,
                                                 const BasicTensor<double>&,
                                                 const ConvSpec&,
                                                 const BasicTensor<double>&,
                                                 ConvParams<double>&);

}  // namespace bapose
