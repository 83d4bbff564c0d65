#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <vector>

#include "crpm/cops.hpp"
#include "crpm/ctensor.hpp"
#include "crpm/nets.hpp"
#include "crpm/rng.hpp"

using namespace crpm;

namespace {

CTensor random_tensor(const std::vector<int>& shape, Rng& rng) {
  CTensor t = CTensor::zeros(shape);
  for (auto& v : t.real) v = rng.uniform(-1.0, 1.0);
  for (auto& v : t.imag) v = rng.uniform(-1.0, 1.0);
  return t;
}

}  // namespace

TEST_CASE("build_cs_cnn: structure, init bounds, parameter count") {
  Network net = build_cs_cnn(6, 4, 3);
  CHECK(net.spec.kind == "cs");
  CHECK(net.params.convs.size() == 4);
  CHECK(net.params.head->w_re == 1.0);
  CHECK(net.params.head->w_im == 0.0);
  CHECK(net.params.head->bias == 0.0);

  // conv1: fan_in = 3*3*6*2 = 108, bound sqrt(3/108).
  const CConvLayer& c1 = net.params.find("conv1");
  CHECK(c1.weights->shape == std::vector<int>{12, 6, 3, 3});
  const double bound = std::sqrt(3.0 / 108.0);
  for (double v : c1.weights->real) {
    CHECK(std::fabs(v) <= bound);
  }
  for (double v : c1.bias->real) CHECK(v == 0.0);
  for (double v : c1.bias->imag) CHECK(v == 0.0);

  // 2*(9*6*12 + 9*12*24 + 1*24*48 + 1*48*4) + 2*(12+24+48+4) + 5
  const std::int64_t want =
      2 * (9 * 6 * 12 + 9 * 12 * 24 + 24 * 48 + 48 * 4) + 2 * (12 + 24 + 48 + 4) + 5;
  CHECK(parameter_count(net) == want);

  // Different seeds give different weights; same seed identical.
  Network net2 = build_cs_cnn(6, 4, 3);
  Network net3 = build_cs_cnn(6, 4, 4);
  CHECK(net2.params.find("conv1").weights->real == c1.weights->real);
  CHECK(net3.params.find("conv1").weights->real != c1.weights->real);
}

TEST_CASE("receptive field of the patch chain is 10") {
  Network cs = build_cs_cnn(6, 3, 1);
  const auto rf = receptive_field_chain(cs.spec);
  CHECK(rf.back() == 10);
  Network dil = transfer_to_dilated(cs);
  const auto rf2 = receptive_field_chain(dil.spec);
  CHECK(rf2.back() == 10);
}

TEST_CASE("patch_forward returns a probability vector") {
  Rng rng(2);
  Network cs = build_cs_cnn(4, 5, 7);
  CTensor patch = random_tensor({4, 10, 10}, rng);
  const auto p = patch_forward(cs, patch);
  CHECK(p.size() == 5);
  double sum = 0;
  for (double v : p) {
    CHECK(v >= 0.0);
    sum += v;
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  CTensor bad = random_tensor({4, 12, 12}, rng);
  CHECK_THROWS_AS(patch_forward(cs, bad), ShapeError);
}

TEST_CASE("transfer keeps weight values aliased, geometry dilated") {
  Network cs = build_cs_cnn(6, 3, 11);
  Network dil = transfer_to_dilated(cs);
  CHECK(dil.spec.kind == "dilated");
  CHECK(dil.params.find("conv1").weights.get() ==
        cs.params.find("conv1").weights.get());
  CHECK(dil.params.find("conv2").dilation == 2);
  CHECK(dil.params.head.get() == cs.params.head.get());
}

TEST_CASE("dense dilated output equals patchwise output at every pixel") {
  Rng rng(23);
  Network cs = build_cs_cnn(6, 3, 31);
  // Nontrivial head so magnitude/phase also participate.
  *cs.params.head = RiapHead{0.7, -0.2, 0.4, 0.15, 0.05};
  Network dil = transfer_to_dilated(cs);
  CTensor image = random_tensor({6, 32, 32}, rng);

  DenseOut dense = dense_forward(dil, image, true);
  CHECK(dense.scores.shape == std::vector<int>{3, 32, 32});
  CHECK(dense.feat24.channels() == 24);

  double worst = 0;
  for (int r = 0; r + kPatchSize <= 32; ++r) {
    for (int c = 0; c + kPatchSize <= 32; ++c) {
      const auto pv = patch_forward(cs, extract_window(image, r, c, kPatchSize));
      const int pr = r - kAlignOffset, pc = c - kAlignOffset;
      if (pr >= 32 || pc >= 32) continue;
      for (int k = 0; k < 3; ++k) {
        worst = std::max(worst, std::fabs(pv[k] - dense.scores.re(k, pr, pc)));
      }
    }
  }
  CHECK(worst <= 1e-10);
}

TEST_CASE("classify_patchwise agrees with dense inference everywhere") {
  Rng rng(29);
  Network cs = build_cs_cnn(6, 3, 41);
  Network dil = transfer_to_dilated(cs);
  CTensor image = random_tensor({6, 24, 26}, rng);
  const auto patch_map = classify_patchwise(cs, image);
  const auto dense_map = argmax_map(
      sliding_inference([&](const CTensor& t) { return dense_forward(dil, t, true).scores; },
                        image));
  CHECK(patch_map.size() == dense_map.size());
  int diff = 0;
  for (std::size_t i = 0; i < patch_map.size(); ++i) {
    diff += patch_map[i] != dense_map[i];
  }
  CHECK(diff == 0);
}

TEST_CASE("tile_offsets clamps the last window") {
  CHECK(tile_offsets(96, 128, 64) == std::vector<int>{0});
  CHECK(tile_offsets(128, 128, 64) == std::vector<int>{0});
  CHECK(tile_offsets(192, 128, 64) == std::vector<int>{0, 64});
  CHECK(tile_offsets(256, 128, 64) == std::vector<int>{0, 64, 128});
  CHECK(tile_offsets(200, 128, 64) == std::vector<int>{0, 64, 72});
}

TEST_CASE("extract_window copies the exact block") {
  CTensor x = CTensor::zeros({1, 6, 6});
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) x.re(0, i, j) = i * 6 + j;
  CTensor w = extract_window(x, 2, 3, 3);
  CHECK(w.shape == std::vector<int>{1, 3, 3});
  CHECK(w.re(0, 0, 0) == 15.0);
  CHECK(w.re(0, 2, 2) == 29.0);
}

TEST_CASE("sliding_inference: constant predictor stays constant, any size") {
  Rng rng(31);
  for (auto dims : std::vector<std::pair<int, int>>{{40, 40}, {128, 128}, {200, 150}}) {
    CTensor image = random_tensor({2, dims.first, dims.second}, rng);
    CTensor probs = sliding_inference(
        [](const CTensor& t) {
          CTensor p = CTensor::zeros({3, t.height(), t.width()});
          for (int i = 0; i < t.height() * t.width(); ++i) {
            p.real[i] = 0.2;
            p.real[t.height() * t.width() + i] = 0.5;
            p.real[2 * t.height() * t.width() + i] = 0.3;
          }
          return p;
        },
        image);
    CHECK(probs.shape == std::vector<int>{3, dims.first, dims.second});
    for (int i = 0; i < dims.first * dims.second; ++i) {
      CHECK(probs.real[static_cast<std::size_t>(dims.first) * dims.second + i] ==
            doctest::Approx(0.5).epsilon(1e-12));
    }
  }
}

TEST_CASE("sliding_inference is invariant to CRPM_THREADS") {
  Rng rng(37);
  Network cs = build_cs_cnn(6, 3, 43);
  Network dil = transfer_to_dilated(cs);
  CTensor image = random_tensor({6, 150, 140}, rng);
  auto predict = [&](const CTensor& t) { return dense_forward(dil, t, true).scores; };
  setenv("CRPM_THREADS", "1", 1);
  CTensor a = sliding_inference(predict, image);
  setenv("CRPM_THREADS", "3", 1);
  CTensor b = sliding_inference(predict, image);
  unsetenv("CRPM_THREADS");
  CHECK(a.real == b.real);
  CHECK(a.imag == b.imag);
}

TEST_CASE("argmax_map: external labels 1..K, first class wins ties") {
  CTensor p = CTensor::zeros({3, 1, 2});
  p.real = {0.2, 0.4, 0.5, 0.4, 0.3, 0.2};
  const auto m = argmax_map(p);
  CHECK(m[0] == 2);
  CHECK(m[1] == 1);  // tie 0.4/0.4 -> first
}

TEST_CASE("crpm assembly: frozen shared branches, fresh decoder") {
  Network cs = build_cs_cnn(6, 3, 51);
  Network crpm = build_crpm(cs, 52);
  CHECK(crpm.spec.kind == "crpm");
  CHECK(crpm.params.is_frozen("conv1"));
  CHECK(crpm.params.is_frozen("conv2"));
  CHECK(crpm.params.is_frozen("conv3"));
  CHECK_FALSE(crpm.params.is_frozen("tconv1"));
  CHECK_FALSE(crpm.params.is_frozen("fusion"));
  CHECK_FALSE(crpm.params.is_frozen("head"));
  CHECK(crpm.params.find("conv1").weights.get() == cs.params.find("conv1").weights.get());
  CHECK(crpm.params.head.get() != cs.params.head.get());
  CHECK(crpm.params.find("tconv1").weights->shape == std::vector<int>{48, 24, 2, 2});
}

TEST_CASE("crpm_forward yields per-pixel distributions on a 128 tile") {
  Rng rng(53);
  Network cs = build_cs_cnn(6, 3, 61);
  Network crpm = build_crpm(cs, 62);
  CTensor tile = random_tensor({6, kTileSize, kTileSize}, rng);
  CTensor probs = crpm_forward(crpm, tile);
  CHECK(probs.shape == std::vector<int>{3, kTileSize, kTileSize});
  double sum = 0;
  for (int c = 0; c < 3; ++c) sum += probs.re(c, 100, 17);
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  CTensor small = random_tensor({6, 64, 64}, rng);
  CHECK_THROWS_AS(crpm_forward(crpm, small), ShapeError);
}

TEST_CASE("crpm_backward matches finite differences on trainable groups") {
  Rng rng(59);
  Network cs = build_cs_cnn(2, 2, 71);
  Network crpm = build_crpm(cs, 72);
  *crpm.params.head = RiapHead{0.8, -0.3, 0.2, 0.1, 0.0};
  CTensor tile = random_tensor({2, kTileSize, kTileSize}, rng);
  CrpmFrozen frozen = crpm_frozen_forward(crpm, tile);

  CTensor coeff = random_tensor({2, kTileSize, kTileSize}, rng);
  auto loss = [&]() {
    CTensor scores = crpm_trainable_forward(crpm, frozen, nullptr, false);
    double s = 0;
    for (std::size_t i = 0; i < scores.real.size(); ++i) {
      s += coeff.real[i] * scores.real[i];
    }
    return s;
  };
  CrpmTrace trace;
  crpm_trainable_forward(crpm, frozen, &trace, false);
  CTensor gs = coeff;
  std::fill(gs.imag.begin(), gs.imag.end(), 0.0);
  ParamGrads grads = crpm_backward(crpm, trace, gs);

  const double h = 1e-6;
  double worst = 0.0;
  for (const char* group : {"tconv1", "tconv2", "fusion"}) {
    CConvLayer& layer = crpm.params.find(group);
    const CTensor& gw = grads.convs.at(group).grad_weights;
    for (int rep = 0; rep < 4; ++rep) {
      const std::size_t i = rng.uniform_int(layer.weights->real.size());
      double* slot = (rep % 2 == 0) ? &layer.weights->real[i] : &layer.weights->imag[i];
      const double analytic = (rep % 2 == 0) ? gw.real[i] : gw.imag[i];
      const double saved = *slot;
      *slot = saved + h;
      const double up = loss();
      *slot = saved - h;
      const double dn = loss();
      *slot = saved;
      const double fd = (up - dn) / (2 * h);
      worst = std::max(worst, std::fabs(analytic - fd) /
                                  std::max({1.0, std::fabs(analytic), std::fabs(fd)}));
    }
  }
  CHECK(worst < 1e-5);
  // Frozen groups produce no gradient entries.
  CHECK(grads.convs.count("conv1") == 0);
}

TEST_CASE("network spec validation catches broken chains") {
  Network cs = build_cs_cnn(6, 3, 81);
  CHECK_NOTHROW(cs.spec.validate());
  NetworkSpec broken = cs.spec;
  broken.layers[0].in_ch += 1;  // conv1 no longer matches c_in
  CHECK_THROWS_AS(broken.validate(), ShapeError);
}
