#include "crpm/cops.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace crpm {

namespace {

struct ConvGeom {
  int in_h, in_w, out_h, out_w, kernel, stride, dilation;
  Padding pad;
};

int conv_out_extent(int in, int pad_lo, int pad_hi, int k, int stride, int dil) {
  const int span = (k - 1) * dil + 1;
  const int padded = in + pad_lo + pad_hi;
  if (padded < span) return 0;
  return (padded - span) / stride + 1;
}

// out += sign * Conv(x, k) for one plane pair.
void conv_accum_plane(const double* x, const double* k, double sign,
                      const ConvGeom& g, double* out) {
  for (int p = 0; p < g.kernel; ++p) {
    for (int q = 0; q < g.kernel; ++q) {
      const double kv = sign * k[p * g.kernel + q];
      if (kv == 0.0) continue;
      for (int oh = 0; oh < g.out_h; ++oh) {
        const int ih = oh * g.stride - g.pad.top + p * g.dilation;
        if (ih < 0 || ih >= g.in_h) continue;
        // valid ow range for 0 <= iw < in_w
        const int base = -g.pad.left + q * g.dilation;
        int ow_lo = 0, ow_hi = g.out_w - 1;
        if (base < 0) ow_lo = (-base + g.stride - 1) / g.stride;
        if (base + ow_hi * g.stride >= g.in_w) {
          ow_hi = (g.in_w - 1 - base) / g.stride;
        }
        const double* xrow = x + static_cast<std::size_t>(ih) * g.in_w;
        double* orow = out + static_cast<std::size_t>(oh) * g.out_w;
        for (int ow = ow_lo; ow <= ow_hi; ++ow) {
          orow[ow] += kv * xrow[base + ow * g.stride];
        }
      }
    }
  }
}

// Fused stride-1 convolution over a whole layer, row-blocked so each output
// row accumulates in an L1-resident buffer while the few input rows it needs
// stay hot in cache across all output channels. One pass per kernel tap
// updates both planes of the row buffer from both input planes, cutting
// memory traffic versus four separate full-plane accumulations.
void cconv_fused_s1(const CTensor& x, const CConvLayer& layer,
                    const ConvGeom& g, CTensor& out) {
  const int in_ch = layer.in_channels(), out_ch = layer.out_channels();
  const std::size_t in_plane = static_cast<std::size_t>(g.in_h) * g.in_w;
  const std::size_t out_plane = static_cast<std::size_t>(g.out_h) * g.out_w;
  const std::size_t ksz = static_cast<std::size_t>(g.kernel) * g.kernel;
  const CTensor& w = *layer.weights;
  std::vector<double> row_r(g.out_w), row_i(g.out_w);

  for (int oh = 0; oh < g.out_h; ++oh) {
    for (int oc = 0; oc < out_ch; ++oc) {
      const double bias_r = layer.bias->real[oc];
      const double bias_i = layer.bias->imag[oc];
      std::fill(row_r.begin(), row_r.end(), bias_r);
      std::fill(row_i.begin(), row_i.end(), bias_i);
      for (int ic = 0; ic < in_ch; ++ic) {
        const double* xr = x.real.data() + ic * in_plane;
        const double* xi = x.imag.data() + ic * in_plane;
        const std::size_t koff =
            (static_cast<std::size_t>(oc) * in_ch + ic) * ksz;
        const double* wr = w.real.data() + koff;
        const double* wi = w.imag.data() + koff;
        for (int p = 0; p < g.kernel; ++p) {
          const int ih = oh - g.pad.top + p * g.dilation;
          if (ih < 0 || ih >= g.in_h) continue;
          for (int q = 0; q < g.kernel; ++q) {
            const double kr = wr[p * g.kernel + q];
            const double ki = wi[p * g.kernel + q];
            if (kr == 0.0 && ki == 0.0) continue;
            const int base = -g.pad.left + q * g.dilation;
            int ow_lo = 0, ow_hi = g.out_w - 1;
            if (base < 0) ow_lo = -base;
            if (base + ow_hi >= g.in_w) ow_hi = g.in_w - 1 - base;
            const int n = ow_hi - ow_lo + 1;
            if (n <= 0) continue;
            const std::size_t xoff =
                static_cast<std::size_t>(ih) * g.in_w + base + ow_lo;
            const double* __restrict ar = xr + xoff;
            const double* __restrict ai = xi + xoff;
            double* __restrict br = row_r.data() + ow_lo;
            double* __restrict bi = row_i.data() + ow_lo;
            for (int j = 0; j < n; ++j) {
              br[j] += kr * ar[j] - ki * ai[j];
              bi[j] += ki * ar[j] + kr * ai[j];
            }
          }
        }
      }
      const std::size_t ooff = oc * out_plane + static_cast<std::size_t>(oh) * g.out_w;
      std::copy(row_r.begin(), row_r.end(), out.real.data() + ooff);
      std::copy(row_i.begin(), row_i.end(), out.imag.data() + ooff);
    }
  }
}

// kgrad[p,q] += sign * sum_ohw x[ih,iw] * g[oh,ow]
void conv_accum_kernel_grad(const double* x, const double* gout, double sign,
                            const ConvGeom& g, double* kgrad) {
  for (int p = 0; p < g.kernel; ++p) {
    for (int q = 0; q < g.kernel; ++q) {
      double acc = 0.0;
      for (int oh = 0; oh < g.out_h; ++oh) {
        const int ih = oh * g.stride - g.pad.top + p * g.dilation;
        if (ih < 0 || ih >= g.in_h) continue;
        const int base = -g.pad.left + q * g.dilation;
        int ow_lo = 0, ow_hi = g.out_w - 1;
        if (base < 0) ow_lo = (-base + g.stride - 1) / g.stride;
        if (base + ow_hi * g.stride >= g.in_w) {
          ow_hi = (g.in_w - 1 - base) / g.stride;
        }
        const double* xrow = x + static_cast<std::size_t>(ih) * g.in_w;
        const double* grow = gout + static_cast<std::size_t>(oh) * g.out_w;
        for (int ow = ow_lo; ow <= ow_hi; ++ow) {
          acc += xrow[base + ow * g.stride] * grow[ow];
        }
      }
      kgrad[p * g.kernel + q] += sign * acc;
    }
  }
}

// xgrad += sign * scatter of g through kernel k (adjoint of conv_accum_plane).
void conv_accum_input_grad(const double* gout, const double* k, double sign,
                           const ConvGeom& g, double* xgrad) {
  for (int p = 0; p < g.kernel; ++p) {
    for (int q = 0; q < g.kernel; ++q) {
      const double kv = sign * k[p * g.kernel + q];
      if (kv == 0.0) continue;
      for (int oh = 0; oh < g.out_h; ++oh) {
        const int ih = oh * g.stride - g.pad.top + p * g.dilation;
        if (ih < 0 || ih >= g.in_h) continue;
        const int base = -g.pad.left + q * g.dilation;
        int ow_lo = 0, ow_hi = g.out_w - 1;
        if (base < 0) ow_lo = (-base + g.stride - 1) / g.stride;
        if (base + ow_hi * g.stride >= g.in_w) {
          ow_hi = (g.in_w - 1 - base) / g.stride;
        }
        const double* grow = gout + static_cast<std::size_t>(oh) * g.out_w;
        double* xrow = xgrad + static_cast<std::size_t>(ih) * g.in_w;
        for (int ow = ow_lo; ow <= ow_hi; ++ow) {
          xrow[base + ow * g.stride] += kv * grow[ow];
        }
      }
    }
  }
}

ConvGeom make_geom(const CTensor& x, const CConvLayer& layer) {
  ConvGeom g;
  g.in_h = x.height();
  g.in_w = x.width();
  g.kernel = layer.kernel();
  g.stride = layer.stride;
  g.dilation = layer.dilation;
  g.pad = layer.pad;
  g.out_h = conv_out_extent(g.in_h, g.pad.top, g.pad.bottom, g.kernel, g.stride,
                            g.dilation);
  g.out_w = conv_out_extent(g.in_w, g.pad.left, g.pad.right, g.kernel, g.stride,
                            g.dilation);
  return g;
}

}  // namespace

CTensor cconv2d(const CTensor& x, const CConvLayer& layer) {
  const int in_ch = layer.in_channels(), out_ch = layer.out_channels();
  if (x.channels() != in_ch) throw ShapeError("cconv2d: channel mismatch");
  const ConvGeom g = make_geom(x, layer);
  if (g.out_h <= 0 || g.out_w <= 0) throw ShapeError("cconv2d: empty output");

  CTensor out = CTensor::zeros({out_ch, g.out_h, g.out_w});
  if (g.stride == 1) {
    cconv_fused_s1(x, layer, g, out);
    return out;
  }
  const std::size_t in_plane = static_cast<std::size_t>(g.in_h) * g.in_w;
  const std::size_t out_plane = static_cast<std::size_t>(g.out_h) * g.out_w;
  const std::size_t ksz = static_cast<std::size_t>(g.kernel) * g.kernel;
  const CTensor& w = *layer.weights;

  for (int oc = 0; oc < out_ch; ++oc) {
    double* or_ = out.real.data() + oc * out_plane;
    double* oi = out.imag.data() + oc * out_plane;
    for (int ic = 0; ic < in_ch; ++ic) {
      const double* xr = x.real.data() + ic * in_plane;
      const double* xi = x.imag.data() + ic * in_plane;
      const std::size_t koff = (static_cast<std::size_t>(oc) * in_ch + ic) * ksz;
      const double* wr = w.real.data() + koff;
      const double* wi = w.imag.data() + koff;
      // The four staggered real convolutions of the complex product.
      conv_accum_plane(xr, wr, +1.0, g, or_);
      conv_accum_plane(xi, wi, -1.0, g, or_);
      conv_accum_plane(xr, wi, +1.0, g, oi);
      conv_accum_plane(xi, wr, +1.0, g, oi);
    }
    const double br = layer.bias->real[oc], bi = layer.bias->imag[oc];
    if (br != 0.0 || bi != 0.0) {
      for (std::size_t i = 0; i < out_plane; ++i) {
        or_[i] += br;
        oi[i] += bi;
      }
    }
  }
  return out;
}

GradBundle cconv2d_backward(const CTensor& grad_out, const CTensor& x,
                            const CConvLayer& layer) {
  const int in_ch = layer.in_channels(), out_ch = layer.out_channels();
  if (x.channels() != in_ch) throw ShapeError("cconv2d_backward: channel mismatch");
  const ConvGeom g = make_geom(x, layer);
  if (grad_out.channels() != out_ch || grad_out.height() != g.out_h ||
      grad_out.width() != g.out_w) {
    throw ShapeError("cconv2d_backward: grad_out shape mismatch");
  }

  GradBundle b;
  b.grad_input = CTensor::zeros(x.shape);
  b.grad_weights = CTensor::zeros(layer.weights->shape);
  b.grad_bias = CTensor::zeros(layer.bias->shape);

  const std::size_t in_plane = static_cast<std::size_t>(g.in_h) * g.in_w;
  const std::size_t out_plane = static_cast<std::size_t>(g.out_h) * g.out_w;
  const std::size_t ksz = static_cast<std::size_t>(g.kernel) * g.kernel;
  const CTensor& w = *layer.weights;

  for (int oc = 0; oc < out_ch; ++oc) {
    const double* gr = grad_out.real.data() + oc * out_plane;
    const double* gi = grad_out.imag.data() + oc * out_plane;
    double sr = 0.0, si = 0.0;
    for (std::size_t i = 0; i < out_plane; ++i) {
      sr += gr[i];
      si += gi[i];
    }
    b.grad_bias.real[oc] = sr;
    b.grad_bias.imag[oc] = si;

    for (int ic = 0; ic < in_ch; ++ic) {
      const double* xr = x.real.data() + ic * in_plane;
      const double* xi = x.imag.data() + ic * in_plane;
      const std::size_t koff = (static_cast<std::size_t>(oc) * in_ch + ic) * ksz;
      // Eqs. 8-9 sign pattern over the four staggered paths.
      conv_accum_kernel_grad(xr, gr, +1.0, g, b.grad_weights.real.data() + koff);
      conv_accum_kernel_grad(xi, gi, +1.0, g, b.grad_weights.real.data() + koff);
      conv_accum_kernel_grad(xi, gr, -1.0, g, b.grad_weights.imag.data() + koff);
      conv_accum_kernel_grad(xr, gi, +1.0, g, b.grad_weights.imag.data() + koff);

      const double* wr = w.real.data() + koff;
      const double* wi = w.imag.data() + koff;
      double* gxr = b.grad_input.real.data() + ic * in_plane;
      double* gxi = b.grad_input.imag.data() + ic * in_plane;
      conv_accum_input_grad(gr, wr, +1.0, g, gxr);
      conv_accum_input_grad(gi, wi, +1.0, g, gxr);
      conv_accum_input_grad(gr, wi, -1.0, g, gxi);
      conv_accum_input_grad(gi, wr, +1.0, g, gxi);
    }
  }
  return b;
}

CTensor crelu(const CTensor& x) {
  CTensor out = x;
  crelu_inplace(out);
  return out;
}

void crelu_inplace(CTensor& x) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x.real[i] < 0.0) x.real[i] = 0.0;
    if (x.imag[i] < 0.0) x.imag[i] = 0.0;
  }
}

CTensor crelu_backward(const CTensor& grad_out, const CTensor& x_pre) {
  if (!grad_out.same_shape(x_pre)) throw ShapeError("crelu_backward: shape mismatch");
  CTensor g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (x_pre.real[i] <= 0.0) g.real[i] = 0.0;
    if (x_pre.imag[i] <= 0.0) g.imag[i] = 0.0;
  }
  return g;
}

PoolRecord cmaxpool2d(const CTensor& x, const PoolGeom& geom) {
  if (geom.window != 2) throw ShapeError("cmaxpool2d: window must be 2");
  if (geom.dilation < 1) throw ShapeError("cmaxpool2d: dilation must be >= 1");
  const int c = x.channels(), h = x.height(), w = x.width();
  const int d = geom.dilation;
  const int span = d + 1;  // (window-1)*dilation + 1

  int out_h, out_w;
  if (geom.pad == PoolPad::kNone) {
    if (h < span || w < span || (h - span) % geom.stride != 0 ||
        (w - span) % geom.stride != 0) {
      throw ShapeError("cmaxpool2d: extent does not tile with stride/window");
    }
    out_h = (h - span) / geom.stride + 1;
    out_w = (w - span) / geom.stride + 1;
  } else {
    if (geom.stride != 1) throw ShapeError("cmaxpool2d: padded pool needs stride 1");
    out_h = h;
    out_w = w;
  }

  PoolRecord rec;
  rec.output = CTensor::zeros({c, out_h, out_w});
  rec.input_shape = x.shape;
  const std::size_t n = rec.output.size();
  rec.argmax_real.assign(n, 0);
  rec.argmax_imag.assign(n, 0);

  auto clampi = [](int v, int n_) { return v < 0 ? 0 : (v >= n_ ? n_ - 1 : v); };

  for (int ci = 0; ci < c; ++ci) {
    const double* xr = x.real.data() + static_cast<std::size_t>(ci) * h * w;
    const double* xi = x.imag.data() + static_cast<std::size_t>(ci) * h * w;
    for (int oh = 0; oh < out_h; ++oh) {
      for (int ow = 0; ow < out_w; ++ow) {
        int ih0, iw0;
        switch (geom.pad) {
          case PoolPad::kNone:
            ih0 = oh * geom.stride;
            iw0 = ow * geom.stride;
            break;
          case PoolPad::kTopLeft:
            ih0 = oh - d;
            iw0 = ow - d;
            break;
          default:  // kBottomRight
            ih0 = oh;
            iw0 = ow;
            break;
        }
        double best_r = 0.0, best_i = 0.0;
        std::int32_t arg_r = -1, arg_i = -1;
        for (int p = 0; p < 2; ++p) {
          const int ih = clampi(ih0 + p * d, h);
          for (int q = 0; q < 2; ++q) {
            const int iw = clampi(iw0 + q * d, w);
            const std::int32_t idx = ih * w + iw;
            const double vr = xr[idx], vi = xi[idx];
            if (arg_r < 0 || vr > best_r) {
              best_r = vr;
              arg_r = idx;
            }
            if (arg_i < 0 || vi > best_i) {
              best_i = vi;
              arg_i = idx;
            }
          }
        }
        const std::size_t o = rec.output.at(ci, oh, ow);
        rec.output.real[o] = best_r;
        rec.output.imag[o] = best_i;
        rec.argmax_real[o] = arg_r;
        rec.argmax_imag[o] = arg_i;
      }
    }
  }
  return rec;
}

CTensor cmaxpool2d_backward(const CTensor& grad_out, const PoolRecord& rec) {
  if (!grad_out.same_shape(rec.output)) {
    throw ShapeError("cmaxpool2d_backward: grad shape mismatch");
  }
  CTensor g = CTensor::zeros(rec.input_shape);
  const int c = g.channels(), h = g.height(), w = g.width();
  const std::size_t out_plane = grad_out.size() / c;
  const std::size_t in_plane = static_cast<std::size_t>(h) * w;
  for (int ci = 0; ci < c; ++ci) {
    for (std::size_t i = 0; i < out_plane; ++i) {
      const std::size_t o = ci * out_plane + i;
      g.real[ci * in_plane + rec.argmax_real[o]] += grad_out.real[o];
      g.imag[ci * in_plane + rec.argmax_imag[o]] += grad_out.imag[o];
    }
  }
  return g;
}

CTensor ctransconv2d(const CTensor& x, const CConvLayer& layer) {
  const CTensor& w = *layer.weights;  // [in_ch, out_ch, k, k]
  const int in_ch = w.shape[0], out_ch = w.shape[1], k = w.shape[2];
  if (x.channels() != in_ch) throw ShapeError("ctransconv2d: channel mismatch");
  if (k != 2) throw ShapeError("ctransconv2d: kernel must be 2x2");
  const int h = x.height(), wd = x.width();
  CTensor out = CTensor::zeros({out_ch, 2 * h, 2 * wd});

  const std::size_t in_plane = static_cast<std::size_t>(h) * wd;
  const std::size_t out_plane = static_cast<std::size_t>(2 * h) * (2 * wd);
  for (int ci = 0; ci < in_ch; ++ci) {
    const double* xr = x.real.data() + ci * in_plane;
    const double* xi = x.imag.data() + ci * in_plane;
    for (int co = 0; co < out_ch; ++co) {
      double* or_ = out.real.data() + co * out_plane;
      double* oi = out.imag.data() + co * out_plane;
      for (int p = 0; p < 2; ++p) {
        for (int q = 0; q < 2; ++q) {
          const std::size_t koff =
              ((static_cast<std::size_t>(ci) * out_ch + co) * 2 + p) * 2 + q;
          const double wr = w.real[koff], wi = w.imag[koff];
          for (int i = 0; i < h; ++i) {
            const double* xrr = xr + static_cast<std::size_t>(i) * wd;
            const double* xir = xi + static_cast<std::size_t>(i) * wd;
            double* orr = or_ + static_cast<std::size_t>(2 * i + p) * (2 * wd) + q;
            double* oir = oi + static_cast<std::size_t>(2 * i + p) * (2 * wd) + q;
            for (int j = 0; j < wd; ++j) {
              // conjugated kernel: exact adjoint of the stride-2 forward
              orr[2 * j] += wr * xrr[j] + wi * xir[j];
              oir[2 * j] += -wi * xrr[j] + wr * xir[j];
            }
          }
        }
      }
    }
  }
  for (int co = 0; co < out_ch; ++co) {
    const double br = layer.bias->real[co], bi = layer.bias->imag[co];
    if (br != 0.0 || bi != 0.0) {
      double* or_ = out.real.data() + co * out_plane;
      double* oi = out.imag.data() + co * out_plane;
      for (std::size_t i = 0; i < out_plane; ++i) {
        or_[i] += br;
        oi[i] += bi;
      }
    }
  }
  return out;
}

GradBundle ctransconv2d_backward(const CTensor& grad_out, const CTensor& x,
                                 const CConvLayer& layer) {
  const CTensor& w = *layer.weights;
  const int in_ch = w.shape[0], out_ch = w.shape[1];
  const int h = x.height(), wd = x.width();
  if (grad_out.channels() != out_ch || grad_out.height() != 2 * h ||
      grad_out.width() != 2 * wd) {
    throw ShapeError("ctransconv2d_backward: grad shape mismatch");
  }

  GradBundle b;
  b.grad_input = CTensor::zeros(x.shape);
  b.grad_weights = CTensor::zeros(w.shape);
  b.grad_bias = CTensor::zeros(layer.bias->shape);

  const std::size_t in_plane = static_cast<std::size_t>(h) * wd;
  const std::size_t out_plane = static_cast<std::size_t>(2 * h) * (2 * wd);

  for (int co = 0; co < out_ch; ++co) {
    const double* gr = grad_out.real.data() + co * out_plane;
    const double* gi = grad_out.imag.data() + co * out_plane;
    double sr = 0.0, si = 0.0;
    for (std::size_t i = 0; i < out_plane; ++i) {
      sr += gr[i];
      si += gi[i];
    }
    b.grad_bias.real[co] = sr;
    b.grad_bias.imag[co] = si;
  }

  for (int ci = 0; ci < in_ch; ++ci) {
    const double* xr = x.real.data() + ci * in_plane;
    const double* xi = x.imag.data() + ci * in_plane;
    double* gxr = b.grad_input.real.data() + ci * in_plane;
    double* gxi = b.grad_input.imag.data() + ci * in_plane;
    for (int co = 0; co < out_ch; ++co) {
      const double* gr = grad_out.real.data() + co * out_plane;
      const double* gi = grad_out.imag.data() + co * out_plane;
      for (int p = 0; p < 2; ++p) {
        for (int q = 0; q < 2; ++q) {
          const std::size_t koff =
              ((static_cast<std::size_t>(ci) * out_ch + co) * 2 + p) * 2 + q;
          const double wr = w.real[koff], wi = w.imag[koff];
          double acc_wr = 0.0, acc_wi = 0.0;
          for (int i = 0; i < h; ++i) {
            const double* grr = gr + static_cast<std::size_t>(2 * i + p) * (2 * wd) + q;
            const double* gir = gi + static_cast<std::size_t>(2 * i + p) * (2 * wd) + q;
            const double* xrr = xr + static_cast<std::size_t>(i) * wd;
            const double* xir = xi + static_cast<std::size_t>(i) * wd;
            double* gxrr = gxr + static_cast<std::size_t>(i) * wd;
            double* gxir = gxi + static_cast<std::size_t>(i) * wd;
            for (int j = 0; j < wd; ++j) {
              const double grv = grr[2 * j], giv = gir[2 * j];
              gxrr[j] += wr * grv - wi * giv;
              gxir[j] += wi * grv + wr * giv;
              acc_wr += xrr[j] * grv + xir[j] * giv;
              acc_wi += xir[j] * grv - xrr[j] * giv;
            }
          }
          b.grad_weights.real[koff] += acc_wr;
          b.grad_weights.imag[koff] += acc_wi;
        }
      }
    }
  }
  return b;
}

CTensor riap_head(const CTensor& z, const RiapHead& head) {
  const PolarView pv = polar(z);
  CTensor out = CTensor::zeros(z.shape);
  for (std::size_t i = 0; i < z.size(); ++i) {
    out.real[i] = head.w_re * z.real[i] + head.w_im * z.imag[i] +
                  head.w_mag * pv.magnitude[i] + head.w_phase * pv.phase[i] +
                  head.bias;
  }
  return out;
}

RiapGrad riap_head_backward(const CTensor& grad_scores, const CTensor& z,
                            const RiapHead& head) {
  if (!grad_scores.same_shape(z)) throw ShapeError("riap_head_backward: shape mismatch");
  const PolarView pv = polar(z);
  RiapGrad rg;
  rg.grad_z = CTensor::zeros(z.shape);
  rg.grad_head = RiapHead{0.0, 0.0, 0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double gs = grad_scores.real[i];
    const double re = z.real[i], im = z.imag[i];
    const double m = pv.magnitude[i];
    double dre = head.w_re, dim = head.w_im;
    if (m >= kPhaseEps) {
      dre += head.w_mag * re / m - head.w_phase * im / (m * m);
      dim += head.w_mag * im / m + head.w_phase * re / (m * m);
    }
    rg.grad_z.real[i] = gs * dre;
    rg.grad_z.imag[i] = gs * dim;
    rg.grad_head.w_re += gs * re;
    rg.grad_head.w_im += gs * im;
    rg.grad_head.w_mag += gs * m;
    rg.grad_head.w_phase += gs * pv.phase[i];
    rg.grad_head.bias += gs;
  }
  return rg;
}

CTensor softmax_channels(const CTensor& scores) {
  const int c = scores.channels(), h = scores.height(), w = scores.width();
  CTensor out = CTensor::zeros(scores.shape);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (std::size_t p = 0; p < plane; ++p) {
    double mx = scores.real[p];
    for (int ci = 1; ci < c; ++ci) {
      mx = std::max(mx, scores.real[ci * plane + p]);
    }
    double sum = 0.0;
    for (int ci = 0; ci < c; ++ci) {
      const double e = std::exp(scores.real[ci * plane + p] - mx);
      out.real[ci * plane + p] = e;
      sum += e;
    }
    for (int ci = 0; ci < c; ++ci) out.real[ci * plane + p] /= sum;
  }
  return out;
}

}  // namespace crpm
