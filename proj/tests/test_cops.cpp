#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <memory>
#include <vector>

#include "crpm/cops.hpp"
#include "crpm/ctensor.hpp"
#include "crpm/rng.hpp"

using namespace crpm;

namespace {

CTensor random_tensor(const std::vector<int>& shape, Rng& rng) {
  CTensor t = CTensor::zeros(shape);
  for (auto& v : t.real) v = rng.uniform(-1.0, 1.0);
  for (auto& v : t.imag) v = rng.uniform(-1.0, 1.0);
  return t;
}

CConvLayer random_layer(int out_ch, int in_ch, int k, int stride, int dilation,
                        Padding pad, Rng& rng) {
  CConvLayer l;
  l.weights = std::make_shared<CTensor>(random_tensor({out_ch, in_ch, k, k}, rng));
  l.bias = std::make_shared<CTensor>(random_tensor({out_ch}, rng));
  l.stride = stride;
  l.dilation = dilation;
  l.pad = pad;
  return l;
}

// Independent oracle: direct nested-loop complex convolution on
// std::complex, zero padding, same geometry conventions.
CTensor conv_oracle(const CTensor& x, const CConvLayer& l) {
  const int ci = x.channels(), hi = x.height(), wi = x.width();
  const int co = l.out_channels(), k = l.kernel();
  const int ph = hi + l.pad.top + l.pad.bottom;
  const int pw = wi + l.pad.left + l.pad.right;
  const int ho = (ph - (k - 1) * l.dilation - 1) / l.stride + 1;
  const int wo = (pw - (k - 1) * l.dilation - 1) / l.stride + 1;
  CTensor out = CTensor::zeros({co, ho, wo});
  for (int oc = 0; oc < co; ++oc) {
    for (int oh = 0; oh < ho; ++oh) {
      for (int ow = 0; ow < wo; ++ow) {
        std::complex<double> acc(l.bias->real[oc], l.bias->imag[oc]);
        for (int ic = 0; ic < ci; ++ic) {
          for (int p = 0; p < k; ++p) {
            for (int q = 0; q < k; ++q) {
              const int ih = oh * l.stride + p * l.dilation - l.pad.top;
              const int iw = ow * l.stride + q * l.dilation - l.pad.left;
              if (ih < 0 || ih >= hi || iw < 0 || iw >= wi) continue;
              const std::complex<double> xv(x.re(ic, ih, iw), x.im(ic, ih, iw));
              const std::size_t wi_idx =
                  ((static_cast<std::size_t>(oc) * ci + ic) * k + p) * k + q;
              const std::complex<double> wv(l.weights->real[wi_idx],
                                            l.weights->imag[wi_idx]);
              acc += xv * wv;
            }
          }
        }
        out.re(oc, oh, ow) = acc.real();
        out.im(oc, oh, ow) = acc.imag();
      }
    }
  }
  return out;
}

double max_abs_diff(const CTensor& a, const CTensor& b) {
  REQUIRE(a.shape == b.shape);
  double m = 0;
  for (std::size_t i = 0; i < a.real.size(); ++i) {
    m = std::max(m, std::fabs(a.real[i] - b.real[i]));
    m = std::max(m, std::fabs(a.imag[i] - b.imag[i]));
  }
  return m;
}

double inner(const CTensor& a, const CTensor& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.real.size(); ++i) {
    s += a.real[i] * b.real[i] + a.imag[i] * b.imag[i];
  }
  return s;
}

}  // namespace

TEST_CASE("cconv2d: single-pixel complex product") {
  // x = 1+2i, w = 3+4i  ->  (3-8) + (4+6)i = -5 + 10i
  Rng rng(1);
  CConvLayer l = random_layer(1, 1, 1, 1, 1, {}, rng);
  l.weights->real = {3.0};
  l.weights->imag = {4.0};
  l.bias->real = {0.0};
  l.bias->imag = {0.0};
  CTensor x = CTensor::zeros({1, 1, 1});
  x.real = {1.0};
  x.imag = {2.0};
  CTensor y = cconv2d(x, l);
  CHECK(y.real[0] == doctest::Approx(-5.0).epsilon(1e-15));
  CHECK(y.imag[0] == doctest::Approx(10.0).epsilon(1e-15));
}

TEST_CASE("cconv2d matches the nested-loop complex oracle") {
  Rng rng(42);
  struct Geo {
    int stride, dilation;
    Padding pad;
  };
  const Geo geos[] = {{1, 1, {}},          {2, 1, {}},
                      {1, 1, {1, 1, 1, 1}}, {1, 2, {2, 2, 2, 2}},
                      {1, 2, {1, 2, 0, 1}}, {2, 1, {1, 0, 1, 0}}};
  for (const auto& g : geos) {
    for (int rep = 0; rep < 3; ++rep) {
      CConvLayer l = random_layer(3, 2, 3, g.stride, g.dilation, g.pad, rng);
      CTensor x = random_tensor({2, 9, 8}, rng);
      CHECK(max_abs_diff(cconv2d(x, l), conv_oracle(x, l)) < 1e-12);
    }
  }
}

TEST_CASE("cconv2d is exactly four staggered real convolutions") {
  Rng rng(5);
  CConvLayer l = random_layer(2, 2, 3, 1, 1, {1, 1, 1, 1}, rng);
  CTensor x = random_tensor({2, 6, 6}, rng);

  auto real_only = [](const CTensor& t) {
    CTensor r = t;
    std::fill(r.imag.begin(), r.imag.end(), 0.0);
    return r;
  };
  auto imag_as_real = [](const CTensor& t) {
    CTensor r = t;
    r.real = t.imag;
    std::fill(r.imag.begin(), r.imag.end(), 0.0);
    return r;
  };
  CConvLayer lr = l, li = l;
  lr.weights = std::make_shared<CTensor>(real_only(*l.weights));
  lr.bias = std::make_shared<CTensor>(CTensor::zeros({2}));
  li.weights = std::make_shared<CTensor>(imag_as_real(*l.weights));
  li.bias = std::make_shared<CTensor>(CTensor::zeros({2}));

  const CTensor xr = real_only(x), xi = imag_as_real(x);
  const CTensor rr = cconv2d(xr, lr), ii = cconv2d(xi, li);
  const CTensor ri = cconv2d(xr, li), ir = cconv2d(xi, lr);

  const CTensor y = cconv2d(x, l);
  for (std::size_t i = 0; i < y.real.size(); ++i) {
    const int oc = static_cast<int>(i / (y.real.size() / 2));
    // Bit-exact decomposition: same accumulation order per real conv.
    CHECK(y.real[i] ==
          doctest::Approx(rr.real[i] - ii.real[i] + l.bias->real[oc]).epsilon(1e-15));
    CHECK(y.imag[i] ==
          doctest::Approx(ri.real[i] + ir.real[i] + l.bias->imag[oc]).epsilon(1e-15));
  }
}

TEST_CASE("cconv2d_backward: bias gradient sums grad_out; shapes agree") {
  Rng rng(9);
  CConvLayer l = random_layer(3, 2, 3, 1, 1, {1, 1, 1, 1}, rng);
  CTensor x = random_tensor({2, 7, 7}, rng);
  CTensor g = random_tensor(cconv2d(x, l).shape, rng);
  GradBundle gb = cconv2d_backward(g, x, l);
  CHECK(gb.grad_input.shape == x.shape);
  CHECK(gb.grad_weights.shape == l.weights->shape);
  CHECK(gb.grad_bias.shape == l.bias->shape);
  for (int oc = 0; oc < 3; ++oc) {
    double sr = 0, si = 0;
    for (int i = 0; i < g.height(); ++i)
      for (int j = 0; j < g.width(); ++j) {
        sr += g.re(oc, i, j);
        si += g.im(oc, i, j);
      }
    CHECK(gb.grad_bias.real[oc] == doctest::Approx(sr).epsilon(1e-12));
    CHECK(gb.grad_bias.imag[oc] == doctest::Approx(si).epsilon(1e-12));
  }
}

TEST_CASE("crelu rectifies each plane independently") {
  CTensor x = CTensor::zeros({1, 1, 3});
  x.real = {-1.0, 0.5, 0.0};
  x.imag = {2.0, -3.0, -0.0};
  CTensor y = crelu(x);
  CHECK(y.real[0] == 0.0);
  CHECK(y.real[1] == 0.5);
  CHECK(y.imag[0] == 2.0);
  CHECK(y.imag[1] == 0.0);

  CTensor g = CTensor::zeros({1, 1, 3});
  g.real = {10, 10, 10};
  g.imag = {20, 20, 20};
  CTensor gx = crelu_backward(g, x);
  CHECK(gx.real[0] == 0.0);  // pre-activation <= 0 blocks the gradient
  CHECK(gx.real[1] == 10.0);
  CHECK(gx.imag[0] == 20.0);
  CHECK(gx.imag[1] == 0.0);
  CHECK(gx.real[2] == 0.0);  // exactly zero is not > 0
}

TEST_CASE("cmaxpool2d: independent plane argmax, stride 2") {
  CTensor x = CTensor::zeros({1, 2, 2});
  x.real = {1, 4, 2, 3};
  x.imag = {9, 6, 7, 8};
  PoolRecord rec = cmaxpool2d(x, PoolGeom{});
  CHECK(rec.output.real[0] == 4.0);
  CHECK(rec.output.imag[0] == 9.0);
  CHECK(rec.argmax_real[0] == 1);  // flat h*W+w of the max
  CHECK(rec.argmax_imag[0] == 0);

  CTensor g = CTensor::zeros({1, 1, 1});
  g.real = {5};
  g.imag = {7};
  CTensor gx = cmaxpool2d_backward(g, rec);
  CHECK(gx.real[1] == 5.0);
  CHECK(gx.real[0] == 0.0);
  CHECK(gx.imag[0] == 7.0);
  CHECK(gx.imag[1] == 0.0);
}

TEST_CASE("cmaxpool2d: ties break to first element in row-major scan") {
  CTensor x = CTensor::zeros({1, 2, 2});
  x.real = {3, 3, 3, 3};
  x.imag = {0, 1, 1, 0};
  PoolRecord rec = cmaxpool2d(x, PoolGeom{});
  CHECK(rec.argmax_real[0] == 0);
  CHECK(rec.argmax_imag[0] == 1);
}

TEST_CASE("cmaxpool2d: non-tiling input without padding is rejected") {
  CTensor x = CTensor::zeros({1, 5, 4});
  CHECK_THROWS_AS(cmaxpool2d(x, PoolGeom{}), ShapeError);
}

TEST_CASE("padded stride-1 pools preserve spatial size and replicate edges") {
  Rng rng(11);
  CTensor x = random_tensor({2, 6, 6}, rng);
  for (PoolPad pad : {PoolPad::kTopLeft, PoolPad::kBottomRight}) {
    for (int dil : {1, 2}) {
      PoolGeom geom{2, 1, dil, pad};
      PoolRecord rec = cmaxpool2d(x, geom);
      CHECK(rec.output.shape == x.shape);
    }
  }
  // Monotone ramp: top/left padding replicates the first row/col, so output
  // at (i,j) is max over the window reaching up-left = x itself at (i,j).
  CTensor ramp = CTensor::zeros({1, 4, 4});
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) ramp.re(0, i, j) = i * 4 + j;
  PoolRecord r1 = cmaxpool2d(ramp, PoolGeom{2, 1, 1, PoolPad::kTopLeft});
  for (std::size_t i = 0; i < ramp.real.size(); ++i) {
    CHECK(r1.output.real[i] == ramp.real[i]);
  }
  // Bottom/right padding looks down-right: output (i,j) = x(min(i+1,3), min(j+1,3)).
  PoolRecord r2 = cmaxpool2d(ramp, PoolGeom{2, 1, 1, PoolPad::kBottomRight});
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      CHECK(r2.output.re(0, i, j) ==
            ramp.re(0, std::min(i + 1, 3), std::min(j + 1, 3)));
    }
}

TEST_CASE("cmaxpool2d_backward conserves gradient mass") {
  Rng rng(13);
  CTensor x = random_tensor({3, 8, 8}, rng);
  for (auto geom : {PoolGeom{2, 2, 1, PoolPad::kNone},
                    PoolGeom{2, 1, 1, PoolPad::kTopLeft},
                    PoolGeom{2, 1, 2, PoolPad::kBottomRight}}) {
    PoolRecord rec = cmaxpool2d(x, geom);
    CTensor g = random_tensor(rec.output.shape, rng);
    CTensor gx = cmaxpool2d_backward(g, rec);
    double in_r = 0, in_i = 0, out_r = 0, out_i = 0;
    for (double v : g.real) in_r += v;
    for (double v : g.imag) in_i += v;
    for (double v : gx.real) out_r += v;
    for (double v : gx.imag) out_i += v;
    CHECK(out_r == doctest::Approx(in_r).epsilon(1e-12));
    CHECK(out_i == doctest::Approx(in_i).epsilon(1e-12));
  }
}

TEST_CASE("ctransconv2d is the exact adjoint of the stride-2 convolution") {
  Rng rng(17);
  for (int rep = 0; rep < 20; ++rep) {
    // conv_s2: a [ci,H,W] -> [co,H/2,W/2] with k=2; tconv shares the weights
    // as [ci(out-of-conv... ) ...]: tconv weights are [in_ch, out_ch, 2, 2].
    const int co = 2 + static_cast<int>(rng.uniform_int(3));
    const int ci = 1 + static_cast<int>(rng.uniform_int(3));
    CConvLayer conv = random_layer(co, ci, 2, 2, 1, {}, rng);
    conv.bias = std::make_shared<CTensor>(CTensor::zeros({co}));

    CConvLayer tconv;
    tconv.weights = conv.weights;  // [co(in of tconv), ci(out of tconv), 2, 2]
    tconv.bias = std::make_shared<CTensor>(CTensor::zeros({ci}));
    tconv.stride = 2;

    CTensor a = random_tensor({ci, 8, 8}, rng);
    CTensor b = random_tensor({co, 4, 4}, rng);
    const double lhs = inner(cconv2d(a, conv), b);
    const double rhs = inner(a, ctransconv2d(b, tconv));
    CHECK(std::fabs(lhs - rhs) / std::max({1.0, std::fabs(lhs)}) < 1e-10);
  }
}

TEST_CASE("ctransconv2d doubles spatial dims and adds bias") {
  Rng rng(19);
  CConvLayer l;
  l.weights = std::make_shared<CTensor>(random_tensor({3, 2, 2, 2}, rng));
  l.bias = std::make_shared<CTensor>(random_tensor({2}, rng));
  l.stride = 2;
  CTensor x = random_tensor({3, 5, 6}, rng);
  CTensor y = ctransconv2d(x, l);
  CHECK(y.shape == std::vector<int>{2, 10, 12});
}

TEST_CASE("riap_head: feature blend and fixtures") {
  CTensor z = CTensor::zeros({2, 1, 1});
  z.real = {3.0, 0.0};
  z.imag = {4.0, 0.0};
  CHECK(riap_head(z, {0, 0, 1, 0, 0}).real[0] == doctest::Approx(5.0));
  CHECK(riap_head(z, {1, 0, 0, 0, 0}).real[0] == doctest::Approx(3.0));
  CHECK(riap_head(z, {0, 1, 0, 0, 0}).real[0] == doctest::Approx(4.0));
  CHECK(riap_head(z, {0, 0, 0, 1, 0}).real[0] ==
        doctest::Approx(std::atan2(4.0, 3.0)));
  CHECK(riap_head(z, {0, 0, 0, 0, 2.5}).real[0] == doctest::Approx(2.5));
  // Zero z: phase defined as 0, so only the bias survives.
  CHECK(riap_head(z, {0, 0, 1, 1, 0}).real[1] == 0.0);
}

TEST_CASE("riap_head_backward zeroes mag/phase gradients at the origin") {
  CTensor z = CTensor::zeros({1, 1, 2});
  z.real = {0.6, 0.0};
  z.imag = {-0.8, 0.0};
  CTensor g = CTensor::zeros({1, 1, 2});
  g.real = {1.0, 1.0};
  RiapHead head{0.5, -0.25, 0.75, 0.3, 0.0};
  RiapGrad rg = riap_head_backward(g, z, head);
  // At the origin only the linear re/im terms contribute.
  CHECK(rg.grad_z.real[1] == doctest::Approx(0.5));
  CHECK(rg.grad_z.imag[1] == doctest::Approx(-0.25));
  // Head gradient for mag/phase receives no contribution from the origin pixel.
  CHECK(std::isfinite(rg.grad_head.w_mag));
  CHECK(std::isfinite(rg.grad_head.w_phase));
  // Analytic value at (0.6,-0.8): |z| = 1.
  const double m = 1.0;
  const double want_re = 0.5 + 0.75 * 0.6 / m - 0.3 * (-0.8) / (m * m);
  CHECK(rg.grad_z.real[0] == doctest::Approx(want_re).epsilon(1e-12));
}

TEST_CASE("softmax_channels: normalized, stable, order-preserving") {
  CTensor s = CTensor::zeros({3, 1, 2});
  s.real = {1000.0, -1.0, 1001.0, 0.0, 999.0, 1.0};
  CTensor p = softmax_channels(s);
  for (int px = 0; px < 2; ++px) {
    double sum = 0;
    for (int c = 0; c < 3; ++c) sum += p.re(c, 0, px);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(p.re(1, 0, 0) > p.re(0, 0, 0));
  CHECK(p.re(0, 0, 0) > p.re(2, 0, 0));
  CHECK(std::isfinite(p.re(0, 0, 0)));
}
