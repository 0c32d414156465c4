#pragma once

#include <string>
#include <utility>
#include <vector>

#include "bapose/ops.h"
#include "bapose/random.h"
#include "bapose/tensor.h"

namespace bapose {

// Weight (Cout,Cin,kh,kw) and bias (1,Cout,1,1) of one convolution.
template <typename T>
struct ConvParams {
  BasicTensor<T> w;
  BasicTensor<T> b;

  static ConvParams zeros(int cout, int cin, int kh, int kw) {
    return {BasicTensor<T>(cout, cin, kh, kw), BasicTensor<T>(1, cout, 1, 1)};
  }
  int cout() const { return w.n(); }
  int cin() const { return w.c(); }

  // He-normal weights, zero bias.
  void init_he(Rng& rng);
};

template <typename T>
BasicTensor<T> conv_apply(const ConvParams<T>& p, const BasicTensor<T>& x,
                          const ConvSpec& spec) {
  return conv2d(x, p.w, std::span<const T>(p.b.values()), spec);
}

// Accumulates parameter gradients into grad and returns d loss / d x.
template <typename T>
BasicTensor<T> conv_apply_backward(const ConvParams<T>& p,
                                   const BasicTensor<T>& x,
                                   const ConvSpec& spec,
                                   const BasicTensor<T>& dy,
                                   ConvParams<T>& grad);

// Calls f(name, tensor) for the weight and bias of p. Weight sets expose a
// visit() that enumerates every learnable tensor in a fixed order; the order
// drives checkpoint layout and optimizer state.
template <typename P, typename F>
void visit_conv(const std::string& name, P& p, F& f) {
  f(name + ".w", p.w);
  f(name + ".b", p.b);
}

}  // namespace bapose
