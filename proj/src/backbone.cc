#include "bapose/backbone.h"

#include <sstream>

namespace bapose {
namespace {

constexpr ConvSpec kDown{3, 3, 2, 1, 1};
constexpr ConvSpec kKeep{3, 3, 1, 1, 1};

template <typename T>
BasicTensor<T> conv_relu(const ConvParams<T>& p, const BasicTensor<T>& x,
                         const ConvSpec& spec) {
  return relu(conv_apply(p, x, spec));
}

// dy is the gradient w.r.t. the post-ReLU output y.
template <typename T>
BasicTensor<T> conv_relu_backward(const ConvParams<T>& p,
                                  const BasicTensor<T>& x,
                                  const BasicTensor<T>& y,
                                  const ConvSpec& spec,
                                  const BasicTensor<T>& dy,
                                  ConvParams<T>& grad) {
  return conv_apply_backward(p, x, spec, relu_backward(y, dy), grad);
}

}  // namespace

void PyramidConfig::validate() const {
  std::ostringstream os;
  if (base_stride < 2 || (base_stride & (base_stride - 1)) != 0) {
    os << "backbone.base_stride must be a power of two >= 2, got "
       << base_stride;
  } else if (stem_width < 1) {
    os << "backbone.stem_width must be positive, got " << stem_width;
  } else if (blocks < 1) {
    os << "backbone.blocks must be >= 1, got " << blocks;
  } else if (widths[0] < 1) {
    os << "backbone.widths[0] must be positive, got " << widths[0];
  } else {
    for (int i = 1; i < 4; ++i) {
      if (widths[i] < 0) {
        os << "backbone.widths[" << i << "] must be >= 0";
        break;
      }
    }
  }
  if (!os.str().empty()) throw ConfigError(os.str());
}

int PyramidConfig::stem_convs() const {
  int n = 0;
  for (int s = base_stride; s > 1; s >>= 1) ++n;
  return n;
}

void check_backbone_input(const Shape& image, const PyramidConfig& cfg) {
  const int m = cfg.input_multiple();
  if (image.c != 3) {
    throw ShapeError("backbone: expected 3 input channels, got " +
                     image.str());
  }
  if (image.h < m || image.w < m || image.h % m != 0 || image.w % m != 0) {
    const int ph = image.h < m ? m - image.h : (m - image.h % m) % m;
    const int pw = image.w < m ? m - image.w : (m - image.w % m) % m;
    std::ostringstream os;
    os << "backbone: input extents " << image.h << "x" << image.w
       << " must be positive multiples of " << m << "; pad by " << ph
       << " rows and " << pw << " columns";
    throw ShapeError(os.str());
  }
}

template <typename T>
BackboneWeights<T> BackboneWeights<T>::zeros(const PyramidConfig& cfg) {
  cfg.validate();
  BackboneWeights<T> w;
  int cin = 3;
  for (int i = 0; i < cfg.stem_convs(); ++i) {
    w.stem.push_back(ConvParams<T>::zeros(cfg.stem_width, cin, 3, 3));
    cin = cfg.stem_width;
  }
  for (int l = 0; l < 4; ++l) {
    const int cout = cfg.widths[l];
    w.levels[l].push_back(ConvParams<T>::zeros(cout, cin, 3, 3));
    for (int b = 1; b < cfg.blocks; ++b) {
      w.levels[l].push_back(ConvParams<T>::zeros(cout, cout, 3, 3));
    }
    cin = cout;
  }
  return w;
}

template <typename T>
FeaturePyramid<T> backbone_forward(const BasicTensor<T>& image,
                                   const BackboneWeights<T>& w,
                                   const PyramidConfig& cfg,
                                   BackboneTrace<T>* trace) {
  check_backbone_input(image.shape(), cfg);
  BackboneTrace<T> local;
  BackboneTrace<T>& t = trace ? *trace : local;
  t.image = image;
  t.stem_out.clear();

  const BasicTensor<T>* x = &image;
  for (const auto& p : w.stem) {
    t.stem_out.push_back(conv_relu(p, *x, kDown));
    x = &t.stem_out.back();
  }
  FeaturePyramid<T> out;
  out.low_level = *x;
  for (int l = 0; l < 4; ++l) {
    auto& outs = t.level_out[l];
    outs.clear();
    for (std::size_t b = 0; b < w.levels[l].size(); ++b) {
      const ConvSpec& spec = (b == 0 && l > 0) ? kDown : kKeep;
      outs.push_back(conv_relu(w.levels[l][b], *x, spec));
      x = &outs.back();
    }
    out.levels[l] = *x;
  }
  return out;
}

template <typename T>
BasicTensor<T> backbone_backward(const BackboneTrace<T>& t,
                                 const BackboneWeights<T>& w,
                                 const FeaturePyramid<T>& dout,
                                 BackboneWeights<T>& grad) {
  // Gradient flowing into the input of the level above (from its transition).
  BasicTensor<T> carry;
  for (int l = 3; l >= 0; --l) {
    const auto& outs = t.level_out[l];
    BasicTensor<T> d(outs.back().shape());
    if (!dout.levels[l].empty()) add_inplace(d, dout.levels[l]);
    if (!carry.empty()) add_inplace(d, carry);
    for (int b = static_cast<int>(outs.size()) - 1; b >= 0; --b) {
      const BasicTensor<T>& in =
          b > 0 ? outs[b - 1]
                : (l > 0 ? t.level_out[l - 1].back() : t.stem_out.back());
      const ConvSpec& spec = (b == 0 && l > 0) ? kDown : kKeep;
      d = conv_relu_backward(w.levels[l][b], in, outs[b], spec, d,
                             grad.levels[l][b]);
    }
    carry = std::move(d);
  }
  BasicTensor<T> d = std::move(carry);
  if (!dout.low_level.empty()) add_inplace(d, dout.low_level);
  for (int i = static_cast<int>(w.stem.size()) - 1; i >= 0; --i) {
    const BasicTensor<T>& in = i > 0 ? t.stem_out[i - 1] : t.image;
    d = conv_relu_backward(w.stem[i], in, t.stem_out[i], kDown, d,
                           grad.stem[i]);
  }
  return d;
}

template struct BackboneWeights<float>;
template struct BackboneWeights<double>;
template FeaturePyramid<float> backbone_forward(const BasicTensor<float>&,
                                                const BackboneWeights<float>&,
                                                const PyramidConfig&,
                                                BackboneTrace<float>*);
template FeaturePyramid<double> backbone_forward(
    const BasicTensor<double>&, const BackboneWeights<double>&,
    const PyramidConfig&, BackboneTrace<double>*);
template BasicTensor<float> backbone_backward(const BackboneTrace<float>&,
                                              const BackboneWeights<float>&,
                                              const FeaturePyramid<float>&,
                                              BackboneWeights<float>&);
template BasicTensor<double> backbone_backward(const BackboneTrace<double>&,
                                               const BackboneWeights<double>&,
                                               const FeaturePyramid<double>&,
                                               BackboneWeights<double>&);

}  // namespace bapose
