#ifndef CRPM_CTENSOR_HPP_
#define CRPM_CTENSOR_HPP_

#include <cstddef>
#include <vector>

#include "crpm/errors.hpp"

namespace crpm {

// Phase of a complex value with magnitude below this is defined as 0.
inline constexpr double kPhaseEps = 1e-12;

// Complex-valued tensor stored as split real/imaginary planes of f64.
// Shape convention is [channels, height, width]; a rank-4 [out, in, kh, kw]
// layout is used for convolution kernels and rank-1 for biases. The planes
// always have identical shape.
struct CTensor {
  std::vector<int> shape;
  std::vector<double> real;
  std::vector<double> imag;

  CTensor() = default;

  static CTensor zeros(std::vector<int> shape);

  std::size_t size() const { return real.size(); }

  // [C,H,W] accessors.
  int channels() const { return shape.at(shape.size() - 3); }
  int height() const { return shape.at(shape.size() - 2); }
  int width() const { return shape.back(); }

  std::size_t at(int c, int h, int w) const {
    return (static_cast<std::size_t>(c) * height() + h) * width() + w;
  }

  double& re(int c, int h, int w) { return real[at(c, h, w)]; }
  double& im(int c, int h, int w) { return imag[at(c, h, w)]; }
  double re(int c, int h, int w) const { return real[at(c, h, w)]; }
  double im(int c, int h, int w) const { return imag[at(c, h, w)]; }

  bool same_shape(const CTensor& other) const { return shape == other.shape; }
};

// Magnitude/phase view of a CTensor. magnitude >= 0; phase in (-pi, pi],
// 0 where magnitude < kPhaseEps.
struct PolarView {
  std::vector<int> shape;
  std::vector<double> magnitude;
  std::vector<double> phase;
};

std::size_t shape_size(const std::vector<int>& shape);

// Throws DataError when any plane value is NaN/Inf.
void assert_finite(const CTensor& x, const char* what);

// Reflect-101 border extension by `margin` pixels per side: row [a,b,c]
// with margin 1 becomes [b,a,b,c,b]. Requires margin < min(height, width).
CTensor mirror_pad(const CTensor& x, int margin);

// Centered spatial crop; parity leftovers removed from bottom/right.
CTensor crop_center(const CTensor& x, int target_h, int target_w);

// Channel concatenation, a's channels first; spatial dims must agree.
CTensor concat_channels(const CTensor& a, const CTensor& b);

PolarView polar(const CTensor& x);

}  // namespace crpm

#endif  // CRPM_CTENSOR_HPP_
