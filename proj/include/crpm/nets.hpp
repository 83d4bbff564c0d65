#ifndef CRPM_NETS_HPP_
#define CRPM_NETS_HPP_

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "crpm/cops.hpp"
#include "crpm/ctensor.hpp"

namespace crpm {

struct LayerDesc {
  std::string name;
  std::string kind;  // cconv | crelu | cmaxpool | ctransconv | riap_head | softmax
  int in_ch = 0, out_ch = 0, k = 0;
  int stride = 1, dilation = 1;
  Padding pad;
  PoolPad pool_pad = PoolPad::kNone;
  std::string tap;  // when non-empty, the layer output is recorded under this name
};

struct NetworkSpec {
  std::string kind;  // cs | dilated | crpm
  int c_in = 0;
  int n_cls = 0;
  std::vector<LayerDesc> layers;

  // Shape-chains the layer list and checks tap uniqueness.
  void validate() const;
};

// Parameter store. Weight/bias tensors are held through the CConvLayer
// shared_ptrs, so a transferred network aliases the source values while
// carrying its own geometry. The head is shared the same way.
struct NetworkParams {
  std::vector<std::pair<std::string, CConvLayer>> convs;
  std::shared_ptr<RiapHead> head;
  std::set<std::string> frozen;  // group names; "head" freezes the head

  CConvLayer& find(const std::string& name);
  const CConvLayer& find(const std::string& name) const;
  bool is_frozen(const std::string& name) const { return frozen.count(name) > 0; }
};

struct Network {
  NetworkSpec spec;
  NetworkParams params;
};

// Accumulated parameter gradients keyed by group name.
struct ParamGrads {
  std::map<std::string, GradBundle> convs;
  RiapHead head{0, 0, 0, 0, 0};

  void add(const ParamGrads& other);
  void scale(double s);
};

// Patch classifier: conv3x3(c_in->12) -> crelu -> pool2 s2 -> conv3x3(12->24)
// -> crelu -> pool2 s2 -> conv1x1(24->48) -> crelu -> conv1x1(48->n_cls) ->
// riap_head -> softmax. Kernels initialized uniform +-sqrt(3/fan_in) with
// fan_in = k*k*c_in*2, biases zero, head (1,0,0,0,0).
Network build_cs_cnn(int c_in, int n_cls, std::uint64_t seed);

// A-trous conversion sharing the Cs-CNN parameter values: conv1 pad 1;
// pool1 stride 1 top/left pad; conv2 dilation 2 pad 2; pool2 stride 1
// dilation 2 bottom/right pad. Dense output aligns with patch windows at
// offset (-4,-4): scores at pixel p equal patch_forward on the 10x10 window
// with top-left p+(-4,-4).
Network transfer_to_dilated(const Network& cs);

inline constexpr int kPatchSize = 10;
inline constexpr int kAlignOffset = -4;  // dense/patch window offset, both axes
inline constexpr int kTileSize = 128;
inline constexpr int kTileStride = 64;
inline constexpr int kEncoderMargin = 3;  // mirror margin: 128 -> 134

// Forward trace through a chain network, kept for the backward pass.
struct ChainTrace {
  // When false, per-layer inputs and pool records are not retained; the
  // trace then supports taps/scores/probs only (inference), not backward.
  bool record_inputs = true;
  std::vector<CTensor> inputs;  // input value of each layer
  std::map<std::size_t, PoolRecord> pools;
  CTensor scores;  // post-head
  CTensor probs;
  std::map<std::string, CTensor> taps;
};

// Runs a cs/dilated chain. Returns softmax probabilities when `softmax` is
// true, raw head scores otherwise. `trace` may be null.
CTensor chain_forward(const Network& net, const CTensor& x, ChainTrace* trace,
                      bool softmax);

// Backpropagates dL/dscores through a traced chain forward.
ParamGrads chain_backward(const Network& net, const ChainTrace& trace,
                          const CTensor& grad_scores);

// Exactly 10x10 spatial input; returns per-class probabilities.
std::vector<double> patch_forward(const Network& cs, const CTensor& patch);

struct DenseOut {
  CTensor feat24;  // tap after the second conv+relu+pool block, 24xHxW
  CTensor scores;  // n_cls x H x W (softmaxed when requested)
};

DenseOut dense_forward(const Network& dilated, const CTensor& image,
                       bool softmax);

// CRPM assembly: frozen dilated branch + frozen encoder (both aliasing the
// Cs-CNN conv1..conv3 values) with a fresh trainable decoder
// (tconv1 48->24, tconv2 48->24), fusion conv1x1 48->n_cls and head.
Network build_crpm(const Network& cs, std::uint64_t seed);

// Per-tile outputs of the frozen branches; constant during step-2 training.
struct CrpmFrozen {
  CTensor feat24;   // 24 x 128 x 128
  CTensor enc_tap;  // 24 x 64 x 64 skip tap
  CTensor enc_out;  // 48 x 32 x 32 encoder output
};

CrpmFrozen crpm_frozen_forward(const Network& crpm, const CTensor& tile);

struct CrpmTrace {
  CTensor d1_in, d1_pre;          // tconv1 input / pre-relu output
  CTensor cat;                     // concat(decoder up, encoder tap)
  CTensor d2_pre;                  // tconv2 pre-relu output
  CTensor fuse_in;                 // concat(feat24, decoder24)
  CTensor z, scores, probs;
};

CTensor crpm_trainable_forward(const Network& crpm, const CrpmFrozen& frozen,
                               CrpmTrace* trace, bool softmax);

// Full CRPM pass on one 128x128 tile; returns n_cls x 128 x 128 probabilities.
CTensor crpm_forward(const Network& crpm, const CTensor& tile);

ParamGrads crpm_backward(const Network& crpm, const CrpmTrace& trace,
                         const CTensor& grad_scores);

// Tiled whole-scene prediction: 128x128 windows at stride 64 (clamped at the
// right/bottom edge), per-pixel probabilities averaged over overlapping
// windows and renormalized. Scenes smaller than the window are mirror-padded
// up and cropped back. Honors CRPM_THREADS for tile-level parallelism with an
// order-independent reduction.
CTensor sliding_inference(
    const std::function<CTensor(const CTensor&)>& tile_predictor,
    const CTensor& features, int window = kTileSize, int stride = kTileStride);

// Argmax over the channel dimension; classes externally 1..n_cls.
std::vector<std::uint16_t> argmax_map(const CTensor& probs);

// Row-by-row patchwise sweep of the whole scene with the Cs-CNN (the slow
// reference path); scene mirror-padded by 5 so every window exists.
std::vector<std::uint16_t> classify_patchwise(const Network& cs,
                                              const CTensor& features);

// Window start offsets along one axis: multiples of `stride`, with the last
// window clamped to end at `extent`.
std::vector<int> tile_offsets(int extent, int window, int stride);

// Copies the `size`x`size` window with top-left (r0, c0).
CTensor extract_window(const CTensor& x, int r0, int c0, int size);

// Per-layer receptive-field audit of a chain spec (r' = r + (k-1)*d*jump).
std::vector<int> receptive_field_chain(const NetworkSpec& spec);

// 2*(k^2*c_in*c_out) + 2*c_out summed over conv groups, + 5 for the head.
std::int64_t parameter_count(const Network& net);

int env_thread_count();

}  // namespace crpm

#endif  // CRPM_NETS_HPP_
