#include "crpm/ctensor.hpp"

#include <cmath>
#include <string>

namespace crpm {

std::size_t shape_size(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ShapeError("negative dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

CTensor CTensor::zeros(std::vector<int> shape) {
  CTensor t;
  const std::size_t n = shape_size(shape);
  t.shape = std::move(shape);
  t.real.assign(n, 0.0);
  t.imag.assign(n, 0.0);
  return t;
}

void assert_finite(const CTensor& x, const char* what) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x.real[i]) || !std::isfinite(x.imag[i])) {
      throw DataError(std::string("non-finite value in ") + what);
    }
  }
}

CTensor mirror_pad(const CTensor& x, int margin) {
  if (margin < 0) throw ShapeError("mirror_pad: negative margin");
  if (margin == 0) return x;
  const int c = x.channels(), h = x.height(), w = x.width();
  if (margin >= h || margin >= w) {
    throw ShapeError("mirror_pad: margin >= spatial extent");
  }
  CTensor out = CTensor::zeros({c, h + 2 * margin, w + 2 * margin});
  auto reflect = [](int i, int n) {
    // reflect-101: -1 -> 1, n -> n-2
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
    return i;
  };
  for (int ci = 0; ci < c; ++ci) {
    for (int i = 0; i < h + 2 * margin; ++i) {
      const int si = reflect(i - margin, h);
      for (int j = 0; j < w + 2 * margin; ++j) {
        const int sj = reflect(j - margin, w);
        out.re(ci, i, j) = x.re(ci, si, sj);
        out.im(ci, i, j) = x.im(ci, si, sj);
      }
    }
  }
  return out;
}

CTensor crop_center(const CTensor& x, int target_h, int target_w) {
  const int c = x.channels(), h = x.height(), w = x.width();
  if (target_h > h || target_w > w || target_h < 0 || target_w < 0) {
    throw ShapeError("crop_center: target larger than input");
  }
  if (target_h == h && target_w == w) return x;
  const int off_h = (h - target_h) / 2;
  const int off_w = (w - target_w) / 2;
  CTensor out = CTensor::zeros({c, target_h, target_w});
  for (int ci = 0; ci < c; ++ci) {
    for (int i = 0; i < target_h; ++i) {
      for (int j = 0; j < target_w; ++j) {
        out.re(ci, i, j) = x.re(ci, off_h + i, off_w + j);
        out.im(ci, i, j) = x.im(ci, off_h + i, off_w + j);
      }
    }
  }
  return out;
}

CTensor concat_channels(const CTensor& a, const CTensor& b) {
  if (b.size() == 0 && b.channels() == 0) return a;
  if (a.size() == 0 && a.channels() == 0) return b;
  if (a.height() != b.height() || a.width() != b.width()) {
    throw ShapeError("concat_channels: spatial mismatch");
  }
  CTensor out = CTensor::zeros({a.channels() + b.channels(), a.height(), a.width()});
  std::copy(a.real.begin(), a.real.end(), out.real.begin());
  std::copy(a.imag.begin(), a.imag.end(), out.imag.begin());
  std::copy(b.real.begin(), b.real.end(), out.real.begin() + a.size());
  std::copy(b.imag.begin(), b.imag.end(), out.imag.begin() + a.size());
  return out;
}

PolarView polar(const CTensor& x) {
  PolarView v;
  v.shape = x.shape;
  v.magnitude.resize(x.size());
  v.phase.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double re = x.real[i], im = x.imag[i];
    const double m = std::sqrt(re * re + im * im);
    v.magnitude[i] = m;
    v.phase[i] = (m < kPhaseEps) ? 0.0 : std::atan2(im, re);
  }
  return v;
}

}  // namespace crpm
