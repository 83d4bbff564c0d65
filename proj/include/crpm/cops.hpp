#ifndef CRPM_COPS_HPP_
#define CRPM_COPS_HPP_

#include <cstdint>
#include <memory>
#include <vector>

#include "crpm/ctensor.hpp"

namespace crpm {

struct Padding {
  int top = 0, bottom = 0, left = 0, right = 0;
};

// Complex cross-convolution layer: kernel W = W_r + jW_i with complex bias.
// Weight/bias tensors are shared_ptr so a transferred network can alias the
// source network's values while using its own stride/dilation/padding.
struct CConvLayer {
  std::shared_ptr<CTensor> weights;  // [out_ch, in_ch, k, k]
  std::shared_ptr<CTensor> bias;     // [out_ch]
  int stride = 1;
  int dilation = 1;
  Padding pad;

  int out_channels() const { return weights->shape[0]; }
  int in_channels() const { return weights->shape[1]; }
  int kernel() const { return weights->shape[2]; }
};

struct GradBundle {
  CTensor grad_input;
  CTensor grad_weights;
  CTensor grad_bias;
};

// Forward: out_r = Conv(X_r,W_r) - Conv(X_i,W_i) + b_r,
//          out_i = Conv(X_r,W_i) + Conv(X_i,W_r) + b_i,
// each Conv a real inner-product convolution with the layer's stride,
// dilation and zero padding.
CTensor cconv2d(const CTensor& x, const CConvLayer& layer);

GradBundle cconv2d_backward(const CTensor& grad_out, const CTensor& x,
                            const CConvLayer& layer);

// Per-plane rectifier: [y]_+ applied to real and imaginary planes
// independently.
CTensor crelu(const CTensor& x);
void crelu_inplace(CTensor& x);
// Routes grad where the pre-activation plane value was > 0.
CTensor crelu_backward(const CTensor& grad_out, const CTensor& x_pre);

enum class PoolPad : std::uint8_t {
  kNone,         // stride 2, exact tiling, no padding
  kTopLeft,      // stride 1, replicate-pad top/left by dilation
  kBottomRight,  // stride 1, replicate-pad bottom/right by dilation
};

struct PoolGeom {
  int window = 2;
  int stride = 2;
  int dilation = 1;
  PoolPad pad = PoolPad::kNone;
};

// Max pooling applied to real and imaginary planes independently, each with
// its own argmax. Argmax planes store the flat h*W+w index of the selected
// input element per channel; ties break to the first maximal element in
// row-major window scan order.
struct PoolRecord {
  CTensor output;
  std::vector<std::int32_t> argmax_real;
  std::vector<std::int32_t> argmax_imag;
  std::vector<int> input_shape;
};

PoolRecord cmaxpool2d(const CTensor& x, const PoolGeom& geom);
CTensor cmaxpool2d_backward(const CTensor& grad_out, const PoolRecord& rec);

// Transposed complex convolution: the exact adjoint of a stride-2 complex
// cross-convolution under the pairing sum(a_r*b_r + a_i*b_i), i.e. the
// scatter multiplies by the conjugated kernel. weights are [in_ch, out_ch,
// k, k] with k = 2; output spatial dims are 2x the input's. Complex bias
// added after the scatter.
CTensor ctransconv2d(const CTensor& x, const CConvLayer& layer);
GradBundle ctransconv2d_backward(const CTensor& grad_out, const CTensor& x,
                                 const CConvLayer& layer);

// The 4->1 head of the classification stage: one real weight per feature
// (real part, imaginary part, magnitude, phase) shared across class
// channels, plus a real bias.
struct RiapHead {
  double w_re = 1.0;
  double w_im = 0.0;
  double w_mag = 0.0;
  double w_phase = 0.0;
  double bias = 0.0;
};

// score[c,h,w] = w_re*Re + w_im*Im + w_mag*|z| + w_phase*arg(z) + bias.
// The result is real-valued; it is returned in the real plane of a CTensor
// with zero imaginary plane.
CTensor riap_head(const CTensor& z, const RiapHead& head);

struct RiapGrad {
  CTensor grad_z;
  RiapHead grad_head;
};

// Magnitude/phase gradients are zeroed where |z| < kPhaseEps.
RiapGrad riap_head_backward(const CTensor& grad_scores, const CTensor& z,
                            const RiapHead& head);

// Per-pixel max-subtracted softmax over the channel dimension of a real
// score tensor. Output real plane sums to 1 per pixel.
CTensor softmax_channels(const CTensor& scores);

}  // namespace crpm

#endif  // CRPM_COPS_HPP_
