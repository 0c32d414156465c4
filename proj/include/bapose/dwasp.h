#pragma once

#include <array>
#include <string>
#include <vector>

#include "bapose/adaptive_conv.h"
#include "bapose/backbone.h"
#include "bapose/layers.h"
#include "bapose/tensor.h"

namespace bapose {

enum class OffsetMode {
  kPerKeypoint,  // 2K channels: (dx, dy) from a person centre to each joint
  kShared,       // 2 channels: (dx, dy) from a joint pixel to its person centre
};

std::string to_string(OffsetMode m);
OffsetMode parse_offset_mode(const std::string& s);

// Hyper-parameters of the disentangled waterfall module. Zero-valued widths
// select their derived defaults (see DWaspWidths).
struct DWaspConfig {
  std::array<int, 4> dilations{1, 6, 12, 18};
  int branch_width = 128;
  int waterfall_width = 0;  // 0: fused pyramid width
  int final_width = 0;      // 0: fused pyramid width / 4
  int keypoints = 17;
  int group_width = 0;      // 0: final width / groups
  int head_width = 0;       // 0: final width
  bool center_map = true;
  OffsetMode offset_mode = OffsetMode::kPerKeypoint;
};

// Every channel count inside the module, resolved from DWaspConfig and the
// pyramid widths:
//   fused     = c0 + c1 + c2 + c3                  (input g0)
//   branch    = B                                  (each dilated stage)
//   pool      = B                                  (image-pooling branch)
//   concat    = 4B + pool                          (waterfall concatenation)
//   waterfall = Wf (default fused)
//   final     = F  (default fused / 4)
//   head      = keypoint-head adaptive width (default F)
//   groups    = K (per-keypoint offsets) or 1 (shared)
//   group     = G  (default F / groups)
//   heatmaps  = K + 1 with a centre map, else K
//   offsets   = 2K or 2
struct DWaspWidths {
  int fused = 0;
  int branch = 0;
  int pool = 0;
  int concat = 0;
  int waterfall = 0;
  int low_level = 0;
  int final_width = 0;
  int head = 0;
  int groups = 0;
  int group = 0;
  int heatmaps = 0;
  int offsets = 0;
};

// Throws ConfigError when the configuration cannot be built (e.g. F < K).
DWaspWidths resolve_widths(const DWaspConfig& cfg, const PyramidConfig& pyr);

template <typename T>
struct OffsetGroupWeights {
  ConvParams<T> predictor;  // (6, G, 1, 1)
  ConvParams<T> adapt;      // (G, G, 3, 3)
  ConvParams<T> out;        // (2, G, 1, 1)
};

template <typename T>
struct DWaspWeights {
  std::array<ConvParams<T>, 4> branches;  // dilated 3x3, fused/B -> B
  ConvParams<T> pool;                     // 1x1 on pooled g0, fused -> B
  ConvParams<T> waterfall;                // 1x1, concat -> Wf
  ConvParams<T> low_level;                // 1x1, LLF -> Wf
  ConvParams<T> fuse;                     // 1x1, Wf -> Wf
  ConvParams<T> reduce;                   // 1x1, Wf -> F
  ConvParams<T> kp_predictor;             // (6, F, 1, 1)
  ConvParams<T> kp_adapt;                 // (head, F, 3, 3)
  ConvParams<T> kp_out;                   // (heatmaps, head, 1, 1)
  ConvParams<T> off_expand;               // 1x1, F -> groups * G
  std::vector<OffsetGroupWeights<T>> off_groups;

  static DWaspWeights zeros(const DWaspWidths& widths);

  template <typename F>
  void visit(F&& f) { visit_impl(*this, f); }
  template <typename F>
  void visit(F&& f) const { visit_impl(*this, f); }

 private:
  template <typename Self, typename F>
  static void visit_impl(Self& s, F& f) {
    for (int i = 0; i < 4; ++i) {
      visit_conv("dwasp.branch" + std::to_string(i), s.branches[i], f);
    }
    visit_conv("dwasp.pool", s.pool, f);
    visit_conv("dwasp.waterfall", s.waterfall, f);
    visit_conv("dwasp.low_level", s.low_level, f);
    visit_conv("dwasp.fuse", s.fuse, f);
    visit_conv("dwasp.reduce", s.reduce, f);
    visit_conv("heads.kp.predictor", s.kp_predictor, f);
    visit_conv("heads.kp.adapt", s.kp_adapt, f);
    visit_conv("heads.kp.out", s.kp_out, f);
    visit_conv("heads.off.expand", s.off_expand, f);
    for (std::size_t k = 0; k < s.off_groups.size(); ++k) {
      const std::string g = "heads.off.group" + std::to_string(k);
      visit_conv(g + ".predictor", s.off_groups[k].predictor, f);
      visit_conv(g + ".adapt", s.off_groups[k].adapt, f);
      visit_conv(g + ".out", s.off_groups[k].out, f);
    }
  }
};

template <typename T>
struct DWaspOutput {
  BasicTensor<T> heatmaps;  // (N, K[+1], h, w), values in (0, 1)
  BasicTensor<T> offsets;   // (N, 2K or 2, h, w)
};

// ---- pyramid fusion -------------------------------------------------------

// Levels 1..3 resized to level-0 extents and concatenated in level order.
template <typename T>
BasicTensor<T> fuse_pyramid(const FeaturePyramid<T>& p);
// Gradients w.r.t. the four levels (low_level left empty).
template <typename T>
FeaturePyramid<T> fuse_pyramid_backward(const FeaturePyramid<T>& p,
                                        const BasicTensor<T>& dg0);

// ---- waterfall ------------------------------------------------------------

template <typename T>
struct WaterfallTrace {
  BasicTensor<T> g0;
  std::array<BasicTensor<T>, 4> stages;  // post-ReLU g1..g4
  BasicTensor<T> pooled;                 // (N, fused, 1, 1)
  BasicTensor<T> pool_act;               // (N, B, 1, 1) post-ReLU
  BasicTensor<T> concat;
  BasicTensor<T> out;                    // post-ReLU f_Waterfall
};

// g_i = ReLU(W_{d_i} * g_{i-1}) for the four dilation rates in order; the
// stages and the broadcast image-pooling branch are concatenated and reduced
// by a 1x1 convolution (+ReLU) to the waterfall width.
template <typename T>
BasicTensor<T> waterfall_forward(const BasicTensor<T>& g0,
                                 const DWaspWeights<T>& w,
                                 const DWaspConfig& cfg,
                                 WaterfallTrace<T>* trace = nullptr);
template <typename T>
BasicTensor<T> waterfall_backward(const WaterfallTrace<T>& t,
                                  const DWaspWeights<T>& w,
                                  const DWaspConfig& cfg,
                                  const BasicTensor<T>& dout,
                                  DWaspWeights<T>& grad);

// ---- low-level fusion -----------------------------------------------------

template <typename T>
struct LowLevelTrace {
  BasicTensor<T> low_level;
  BasicTensor<T> projected;  // ReLU(W_1 * f_LLF)
  BasicTensor<T> sum;        // projected + f_Waterfall
  BasicTensor<T> fused;      // ReLU(W_1 * sum)
  BasicTensor<T> out;        // ReLU(W_1 * fused), width F
};

template <typename T>
BasicTensor<T> fuse_low_level(const BasicTensor<T>& low_level,
                              const BasicTensor<T>& waterfall,
                              const DWaspWeights<T>& w,
                              LowLevelTrace<T>* trace = nullptr);

template <typename T>
struct LowLevelGrads {
  BasicTensor<T> dlow_level;
  BasicTensor<T> dwaterfall;
};

template <typename T>
LowLevelGrads<T> fuse_low_level_backward(const LowLevelTrace<T>& t,
                                         const DWaspWeights<T>& w,
                                         const BasicTensor<T>& dout,
                                         DWaspWeights<T>& grad);

// ---- heads ----------------------------------------------------------------

template <typename T>
struct GroupTrace {
  BasicTensor<T> input;    // slice of the expanded features
  BasicTensor<T> offsets;  // (N, 18, h, w)
  BasicTensor<T> adapt;    // post-ReLU
};

template <typename T>
struct HeadsTrace {
  BasicTensor<T> features;
  BasicTensor<T> kp_offsets;
  BasicTensor<T> kp_adapt;  // post-ReLU
  BasicTensor<T> heatmaps;  // post-sigmoid
  BasicTensor<T> expanded;  // post-ReLU
  std::vector<GroupTrace<T>> groups;
};

// Keypoint head: adaptive conv -> ReLU -> 1x1 -> sigmoid. Offset head: 1x1
// expansion -> ReLU, split into groups, each through its own adaptive conv ->
// ReLU -> 1x1 to two channels; groups concatenated without squashing.
template <typename T>
DWaspOutput<T> heads_forward(const BasicTensor<T>& features,
                             const DWaspWeights<T>& w,
                             HeadsTrace<T>* trace = nullptr);
template <typename T>
BasicTensor<T> heads_backward(const HeadsTrace<T>& t, const DWaspWeights<T>& w,
                              const DWaspOutput<T>& dout,
                              DWaspWeights<T>& grad);

// ---- full module ----------------------------------------------------------

template <typename T>
struct DWaspTrace {
  FeaturePyramid<T> pyramid;
  WaterfallTrace<T> waterfall;
  LowLevelTrace<T> low_level;
  HeadsTrace<T> heads;
};

template <typename T>
DWaspOutput<T> dwasp_forward(const FeaturePyramid<T>& p,
                             const DWaspWeights<T>& w, const DWaspConfig& cfg,
                             DWaspTrace<T>* trace = nullptr);
// Gradients w.r.t. every pyramid tensor including low_level.
template <typename T>
FeaturePyramid<T> dwasp_backward(const DWaspTrace<T>& t,
                                 const DWaspWeights<T>& w,
                                 const DWaspConfig& cfg,
                                 const DWaspOutput<T>& dout,
                                 DWaspWeights<T>& grad);

}  // namespace bapose
