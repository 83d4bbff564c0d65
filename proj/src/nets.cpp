#include "crpm/nets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <mutex>
#include <thread>

#include "crpm/rng.hpp"

namespace crpm {

namespace {

CConvLayer make_conv(int out_ch, int in_ch, int k, Rng& rng) {
  CConvLayer layer;
  layer.weights = std::make_shared<CTensor>(CTensor::zeros({out_ch, in_ch, k, k}));
  layer.bias = std::make_shared<CTensor>(CTensor::zeros({out_ch}));
  // fan_in counts both planes feeding each output through the four-term sum
  const double bound = std::sqrt(3.0 / (k * k * in_ch * 2.0));
  for (std::size_t i = 0; i < layer.weights->size(); ++i) {
    layer.weights->real[i] = rng.uniform(-bound, bound);
    layer.weights->imag[i] = rng.uniform(-bound, bound);
  }
  return layer;
}

// Transposed-conv kernel [in_ch, out_ch, 2, 2].
CConvLayer make_tconv(int in_ch, int out_ch, Rng& rng) {
  CConvLayer layer;
  layer.weights = std::make_shared<CTensor>(CTensor::zeros({in_ch, out_ch, 2, 2}));
  layer.bias = std::make_shared<CTensor>(CTensor::zeros({out_ch}));
  const double bound = std::sqrt(3.0 / (2 * 2 * in_ch * 2.0));
  for (std::size_t i = 0; i < layer.weights->size(); ++i) {
    layer.weights->real[i] = rng.uniform(-bound, bound);
    layer.weights->imag[i] = rng.uniform(-bound, bound);
  }
  return layer;
}

LayerDesc conv_desc(const std::string& name, int in_ch, int out_ch, int k,
                    int dilation = 1, Padding pad = {}) {
  LayerDesc d;
  d.name = name;
  d.kind = "cconv";
  d.in_ch = in_ch;
  d.out_ch = out_ch;
  d.k = k;
  d.dilation = dilation;
  d.pad = pad;
  return d;
}

LayerDesc relu_desc(const std::string& name) {
  LayerDesc d;
  d.name = name;
  d.kind = "crelu";
  return d;
}

LayerDesc pool_desc(const std::string& name, int stride, int dilation,
                    PoolPad pad, const std::string& tap = "") {
  LayerDesc d;
  d.name = name;
  d.kind = "cmaxpool";
  d.k = 2;
  d.stride = stride;
  d.dilation = dilation;
  d.pool_pad = pad;
  d.tap = tap;
  return d;
}

}  // namespace

void NetworkSpec::validate() const {
  if (c_in < 1) throw ShapeError("spec: c_in must be >= 1");
  if (n_cls < 2) throw ShapeError("spec: n_cls must be >= 2");
  std::set<std::string> taps;
  int ch = c_in;
  for (const auto& l : layers) {
    if (!l.tap.empty() && !taps.insert(l.tap).second) {
      throw ShapeError("spec: duplicate tap " + l.tap);
    }
    if (l.kind == "cconv") {
      if (l.in_ch != ch) throw ShapeError("spec: channel chain broken at " + l.name);
      if (l.k % 2 == 0) throw ShapeError("spec: even conv kernel at " + l.name);
      ch = l.out_ch;
    } else if (l.kind == "ctransconv") {
      if (l.in_ch != ch) throw ShapeError("spec: channel chain broken at " + l.name);
      ch = l.out_ch;
    }
  }
}

CConvLayer& NetworkParams::find(const std::string& name) {
  for (auto& [n, l] : convs) {
    if (n == name) return l;
  }
  throw ShapeError("params: no group named " + name);
}

const CConvLayer& NetworkParams::find(const std::string& name) const {
  for (const auto& [n, l] : convs) {
    if (n == name) return l;
  }
  throw ShapeError("params: no group named " + name);
}

void ParamGrads::add(const ParamGrads& other) {
  for (const auto& [name, g] : other.convs) {
    auto it = convs.find(name);
    if (it == convs.end()) {
      convs.emplace(name, g);
      continue;
    }
    GradBundle& dst = it->second;
    for (std::size_t i = 0; i < g.grad_weights.size(); ++i) {
      dst.grad_weights.real[i] += g.grad_weights.real[i];
      dst.grad_weights.imag[i] += g.grad_weights.imag[i];
    }
    for (std::size_t i = 0; i < g.grad_bias.size(); ++i) {
      dst.grad_bias.real[i] += g.grad_bias.real[i];
      dst.grad_bias.imag[i] += g.grad_bias.imag[i];
    }
  }
  head.w_re += other.head.w_re;
  head.w_im += other.head.w_im;
  head.w_mag += other.head.w_mag;
  head.w_phase += other.head.w_phase;
  head.bias += other.head.bias;
}

void ParamGrads::scale(double s) {
  for (auto& [name, g] : convs) {
    for (auto& v : g.grad_weights.real) v *= s;
    for (auto& v : g.grad_weights.imag) v *= s;
    for (auto& v : g.grad_bias.real) v *= s;
    for (auto& v : g.grad_bias.imag) v *= s;
    (void)name;
  }
  head.w_re *= s;
  head.w_im *= s;
  head.w_mag *= s;
  head.w_phase *= s;
  head.bias *= s;
}

Network build_cs_cnn(int c_in, int n_cls, std::uint64_t seed) {
  if (c_in < 1 || n_cls < 2) throw ShapeError("build_cs_cnn: bad widths");
  Rng rng(seed);
  Network net;
  net.spec.kind = "cs";
  net.spec.c_in = c_in;
  net.spec.n_cls = n_cls;
  auto& L = net.spec.layers;
  L.push_back(conv_desc("conv1", c_in, 12, 3));
  L.push_back(relu_desc("relu1"));
  L.push_back(pool_desc("pool1", 2, 1, PoolPad::kNone));
  L.push_back(conv_desc("conv2", 12, 24, 3));
  L.push_back(relu_desc("relu2"));
  L.push_back(pool_desc("pool2", 2, 1, PoolPad::kNone, "feat24"));
  L.push_back(conv_desc("conv3", 24, 48, 1));
  L.push_back(relu_desc("relu3"));
  L.push_back(conv_desc("conv4", 48, n_cls, 1));
  LayerDesc head;
  head.name = "head";
  head.kind = "riap_head";
  L.push_back(head);
  LayerDesc sm;
  sm.name = "softmax";
  sm.kind = "softmax";
  L.push_back(sm);
  net.spec.validate();

  net.params.convs.emplace_back("conv1", make_conv(12, c_in, 3, rng));
  net.params.convs.emplace_back("conv2", make_conv(24, 12, 3, rng));
  net.params.convs.emplace_back("conv3", make_conv(48, 24, 1, rng));
  net.params.convs.emplace_back("conv4", make_conv(n_cls, 48, 1, rng));
  net.params.head = std::make_shared<RiapHead>(RiapHead{1.0, 0.0, 0.0, 0.0, 0.0});
  return net;
}

Network transfer_to_dilated(const Network& cs) {
  if (cs.spec.kind != "cs") throw ShapeError("transfer_to_dilated: not a Cs-CNN spec");
  Network net;
  net.spec.kind = "dilated";
  net.spec.c_in = cs.spec.c_in;
  net.spec.n_cls = cs.spec.n_cls;
  auto& L = net.spec.layers;
  L.push_back(conv_desc("conv1", cs.spec.c_in, 12, 3, 1, Padding{1, 1, 1, 1}));
  L.push_back(relu_desc("relu1"));
  L.push_back(pool_desc("pool1", 1, 1, PoolPad::kTopLeft));
  L.push_back(conv_desc("conv2", 12, 24, 3, 2, Padding{2, 2, 2, 2}));
  L.push_back(relu_desc("relu2"));
  L.push_back(pool_desc("pool2", 1, 2, PoolPad::kBottomRight, "feat24"));
  L.push_back(conv_desc("conv3", 24, 48, 1));
  L.push_back(relu_desc("relu3"));
  L.push_back(conv_desc("conv4", 48, cs.spec.n_cls, 1));
  LayerDesc head;
  head.name = "head";
  head.kind = "riap_head";
  L.push_back(head);
  LayerDesc sm;
  sm.name = "softmax";
  sm.kind = "softmax";
  L.push_back(sm);
  net.spec.validate();

  // Shared values, per-network geometry.
  for (const auto& [name, src] : cs.params.convs) {
    CConvLayer l = src;  // aliases weights/bias shared_ptrs
    for (const auto& d : L) {
      if (d.name == name) {
        l.stride = d.stride;
        l.dilation = d.dilation;
        l.pad = d.pad;
      }
    }
    net.params.convs.emplace_back(name, l);
  }
  net.params.head = cs.params.head;
  return net;
}

CTensor chain_forward(const Network& net, const CTensor& x, ChainTrace* trace,
                      bool softmax) {
  CTensor cur = x;
  if (trace) {
    trace->inputs.clear();
    trace->pools.clear();
    trace->taps.clear();
  }
  const bool keep = trace && trace->record_inputs;
  for (std::size_t li = 0; li < net.spec.layers.size(); ++li) {
    const LayerDesc& d = net.spec.layers[li];
    if (keep && d.kind != "softmax") trace->inputs.push_back(cur);
    if (d.kind == "cconv") {
      cur = cconv2d(cur, net.params.find(d.name));
    } else if (d.kind == "crelu") {
      if (keep) {
        cur = crelu(cur);
      } else {
        crelu_inplace(cur);  // pre-activation not needed without a backward
      }
    } else if (d.kind == "cmaxpool") {
      PoolGeom g{2, d.stride, d.dilation, d.pool_pad};
      PoolRecord rec = cmaxpool2d(cur, g);
      if (keep) {
        cur = rec.output;
        trace->pools.emplace(li, std::move(rec));
      } else {
        cur = std::move(rec.output);
      }
    } else if (d.kind == "riap_head") {
      cur = riap_head(cur, *net.params.head);
      if (trace) trace->scores = cur;
    } else if (d.kind == "softmax") {
      if (softmax) {
        cur = softmax_channels(cur);
        if (trace) trace->probs = cur;
      }
    } else {
      throw ShapeError("chain_forward: unsupported layer kind " + d.kind);
    }
    if (trace && !d.tap.empty()) trace->taps[d.tap] = cur;
  }
  return cur;
}

ParamGrads chain_backward(const Network& net, const ChainTrace& trace,
                          const CTensor& grad_scores) {
  ParamGrads grads;
  CTensor g = grad_scores;
  // walk layers in reverse, skipping the softmax (grad is w.r.t. scores)
  for (std::size_t ri = net.spec.layers.size(); ri-- > 0;) {
    const LayerDesc& d = net.spec.layers[ri];
    if (d.kind == "softmax") continue;
    const CTensor& in = trace.inputs.at(ri);
    if (d.kind == "cconv") {
      GradBundle b = cconv2d_backward(g, in, net.params.find(d.name));
      g = b.grad_input;
      b.grad_input = CTensor();
      grads.convs.emplace(d.name, std::move(b));
    } else if (d.kind == "crelu") {
      g = crelu_backward(g, in);
    } else if (d.kind == "cmaxpool") {
      g = cmaxpool2d_backward(g, trace.pools.at(ri));
    } else if (d.kind == "riap_head") {
      RiapGrad rg = riap_head_backward(g, in, *net.params.head);
      grads.head = rg.grad_head;
      g = rg.grad_z;
    }
  }
  return grads;
}

std::vector<double> patch_forward(const Network& cs, const CTensor& patch) {
  if (patch.height() != kPatchSize || patch.width() != kPatchSize) {
    throw ShapeError("patch_forward: patch must be 10x10");
  }
  const CTensor probs = chain_forward(cs, patch, nullptr, true);
  std::vector<double> out(probs.channels());
  for (int c = 0; c < probs.channels(); ++c) out[c] = probs.re(c, 0, 0);
  return out;
}

DenseOut dense_forward(const Network& dilated, const CTensor& image,
                       bool softmax) {
  if (image.height() < kPatchSize || image.width() < kPatchSize) {
    throw ShapeError("dense_forward: image smaller than receptive field");
  }
  ChainTrace trace;
  trace.record_inputs = false;  // inference only needs the feat24 tap
  DenseOut out;
  out.scores = chain_forward(dilated, image, &trace, softmax);
  out.feat24 = std::move(trace.taps.at("feat24"));
  return out;
}

Network build_crpm(const Network& cs, std::uint64_t seed) {
  if (cs.spec.kind != "cs") throw ShapeError("build_crpm: expected a Cs-CNN");
  Rng rng(seed);
  Network net;
  net.spec.kind = "crpm";
  net.spec.c_in = cs.spec.c_in;
  net.spec.n_cls = cs.spec.n_cls;

  // Descriptive layer list (executor is the dedicated two-branch pass).
  auto& L = net.spec.layers;
  L.push_back(conv_desc("conv1", cs.spec.c_in, 12, 3));
  L.push_back(conv_desc("conv2", 12, 24, 3));
  L.push_back(conv_desc("conv3", 24, 48, 1));
  LayerDesc t1;
  t1.name = "tconv1";
  t1.kind = "ctransconv";
  t1.in_ch = 48;
  t1.out_ch = 24;
  t1.k = 2;
  t1.stride = 2;
  L.push_back(t1);
  LayerDesc t2 = t1;
  t2.name = "tconv2";
  L.push_back(t2);
  L.push_back(conv_desc("fusion", 48, cs.spec.n_cls, 1));
  LayerDesc head;
  head.name = "head";
  head.kind = "riap_head";
  L.push_back(head);

  // Frozen shared branches.
  for (const char* name : {"conv1", "conv2", "conv3"}) {
    net.params.convs.emplace_back(name, cs.params.find(name));
    net.params.frozen.insert(name);
  }
  // Fresh trainable decoder + fusion + head.
  net.params.convs.emplace_back("tconv1", make_tconv(48, 24, rng));
  net.params.convs.emplace_back("tconv2", make_tconv(48, 24, rng));
  net.params.convs.emplace_back("fusion", make_conv(cs.spec.n_cls, 48, 1, rng));
  net.params.head = std::make_shared<RiapHead>(RiapHead{1.0, 0.0, 0.0, 0.0, 0.0});
  return net;
}

namespace {

CConvLayer with_geometry(const CConvLayer& src, int stride, int dilation,
                         Padding pad) {
  CConvLayer l = src;
  l.stride = stride;
  l.dilation = dilation;
  l.pad = pad;
  return l;
}

}  // namespace

CrpmFrozen crpm_frozen_forward(const Network& crpm, const CTensor& tile) {
  if (tile.height() != kTileSize || tile.width() != kTileSize) {
    throw ShapeError("crpm: tile must be 128x128");
  }
  CrpmFrozen f;

  // Branch A: dilated conv1/conv2 blocks on the raw tile.
  {
    const CConvLayer c1 =
        with_geometry(crpm.params.find("conv1"), 1, 1, Padding{1, 1, 1, 1});
    const CConvLayer c2 =
        with_geometry(crpm.params.find("conv2"), 1, 2, Padding{2, 2, 2, 2});
    CTensor a = crelu(cconv2d(tile, c1));
    a = cmaxpool2d(a, PoolGeom{2, 1, 1, PoolPad::kTopLeft}).output;
    a = crelu(cconv2d(a, c2));
    f.feat24 = cmaxpool2d(a, PoolGeom{2, 1, 2, PoolPad::kBottomRight}).output;
  }

  // Branch B: encoder on the mirror-extended tile (Cs-CNN geometry).
  {
    CTensor e = mirror_pad(tile, kEncoderMargin);  // 134
    e = crelu(cconv2d(e, crpm.params.find("conv1")));                    // 132
    e = cmaxpool2d(e, PoolGeom{2, 2, 1, PoolPad::kNone}).output;         // 66
    e = crelu(cconv2d(e, crpm.params.find("conv2")));                    // 64
    f.enc_tap = e;
    e = cmaxpool2d(e, PoolGeom{2, 2, 1, PoolPad::kNone}).output;         // 32
    f.enc_out = crelu(cconv2d(e, crpm.params.find("conv3")));
  }
  return f;
}

CTensor crpm_trainable_forward(const Network& crpm, const CrpmFrozen& frozen,
                               CrpmTrace* trace, bool softmax) {
  const CConvLayer& t1 = crpm.params.find("tconv1");
  const CConvLayer& t2 = crpm.params.find("tconv2");
  const CConvLayer& fuse = crpm.params.find("fusion");

  CTensor d1_pre = ctransconv2d(frozen.enc_out, t1);  // 24x64x64
  CTensor d1 = crelu(d1_pre);
  CTensor skip = crop_center(frozen.enc_tap, d1.height(), d1.width());
  CTensor cat = concat_channels(d1, skip);            // 48x64x64
  CTensor d2_pre = ctransconv2d(cat, t2);             // 24x128x128
  CTensor d2 = crelu(d2_pre);
  CTensor fuse_in = concat_channels(frozen.feat24, d2);  // 48x128x128
  CTensor z = cconv2d(fuse_in, fuse);
  CTensor scores = riap_head(z, *crpm.params.head);
  CTensor out = softmax ? softmax_channels(scores) : scores;

  if (trace) {
    trace->d1_in = frozen.enc_out;
    trace->d1_pre = std::move(d1_pre);
    trace->cat = std::move(cat);
    trace->d2_pre = std::move(d2_pre);
    trace->fuse_in = std::move(fuse_in);
    trace->z = std::move(z);
    trace->scores = scores;
    if (softmax) trace->probs = out;
  }
  return out;
}

CTensor crpm_forward(const Network& crpm, const CTensor& tile) {
  const CrpmFrozen frozen = crpm_frozen_forward(crpm, tile);
  return crpm_trainable_forward(crpm, frozen, nullptr, true);
}

ParamGrads crpm_backward(const Network& crpm, const CrpmTrace& trace,
                         const CTensor& grad_scores) {
  ParamGrads grads;
  RiapGrad rg = riap_head_backward(grad_scores, trace.z, *crpm.params.head);
  grads.head = rg.grad_head;

  GradBundle bf = cconv2d_backward(rg.grad_z, trace.fuse_in,
                                   crpm.params.find("fusion"));
  // split fusion input grad: first 24 channels (feat24) are frozen
  const int hw = trace.fuse_in.height() * trace.fuse_in.width();
  CTensor g_d2 = CTensor::zeros({24, trace.fuse_in.height(), trace.fuse_in.width()});
  std::copy(bf.grad_input.real.begin() + 24 * static_cast<std::size_t>(hw),
            bf.grad_input.real.end(), g_d2.real.begin());
  std::copy(bf.grad_input.imag.begin() + 24 * static_cast<std::size_t>(hw),
            bf.grad_input.imag.end(), g_d2.imag.begin());
  bf.grad_input = CTensor();
  grads.convs.emplace("fusion", std::move(bf));

  g_d2 = crelu_backward(g_d2, trace.d2_pre);
  GradBundle b2 = ctransconv2d_backward(g_d2, trace.cat,
                                        crpm.params.find("tconv2"));
  // split concat grad: first 24 channels are the decoder path, rest the
  // frozen encoder skip
  const int hw2 = trace.cat.height() * trace.cat.width();
  CTensor g_d1 = CTensor::zeros({24, trace.cat.height(), trace.cat.width()});
  std::copy(b2.grad_input.real.begin(),
            b2.grad_input.real.begin() + 24 * static_cast<std::size_t>(hw2),
            g_d1.real.begin());
  std::copy(b2.grad_input.imag.begin(),
            b2.grad_input.imag.begin() + 24 * static_cast<std::size_t>(hw2),
            g_d1.imag.begin());
  b2.grad_input = CTensor();
  grads.convs.emplace("tconv2", std::move(b2));

  g_d1 = crelu_backward(g_d1, trace.d1_pre);
  GradBundle b1 = ctransconv2d_backward(g_d1, trace.d1_in,
                                        crpm.params.find("tconv1"));
  b1.grad_input = CTensor();
  grads.convs.emplace("tconv1", std::move(b1));
  return grads;
}

int env_thread_count() {
  const char* env = std::getenv("CRPM_THREADS");
  if (!env) return 1;
  const int n = std::atoi(env);
  if (n == 0) return static_cast<int>(std::thread::hardware_concurrency());
  return n > 0 ? n : 1;
}

std::vector<int> tile_offsets(int extent, int window, int stride) {
  std::vector<int> offs;
  if (extent <= window) {
    offs.push_back(0);
    return offs;
  }
  for (int o = 0;; o += stride) {
    if (o + window >= extent) {
      offs.push_back(extent - window);
      break;
    }
    offs.push_back(o);
  }
  return offs;
}

CTensor extract_window(const CTensor& x, int r0, int c0, int window) {
  CTensor out = CTensor::zeros({x.channels(), window, window});
  for (int c = 0; c < x.channels(); ++c) {
    for (int i = 0; i < window; ++i) {
      for (int j = 0; j < window; ++j) {
        out.re(c, i, j) = x.re(c, r0 + i, c0 + j);
        out.im(c, i, j) = x.im(c, r0 + i, c0 + j);
      }
    }
  }
  return out;
}

CTensor sliding_inference(
    const std::function<CTensor(const CTensor&)>& tile_predictor,
    const CTensor& features, int window, int stride) {
  const int h = features.height(), w = features.width();
  if (h < window || w < window) {
    // Mirror-pad up (reflect-101 caps one application at margin < extent, so
    // pad in steps for very small scenes), run, crop back.
    if (std::min(h, w) < 2) {
      throw ShapeError("sliding_inference: scene too small to mirror up");
    }
    int margin = 0;
    if (h < window) margin = std::max(margin, (window - h + 1) / 2);
    if (w < window) margin = std::max(margin, (window - w + 1) / 2);
    margin = std::min(margin, std::min(h, w) - 1);
    CTensor padded = mirror_pad(features, margin);
    CTensor full = sliding_inference(tile_predictor, padded, window, stride);
    return crop_center(full, h, w);
  }

  const auto rows = tile_offsets(h, window, stride);
  const auto cols = tile_offsets(w, window, stride);
  struct Job {
    int r, c;
    CTensor probs;
  };
  std::vector<Job> jobs;
  for (int r : rows) {
    for (int c : cols) jobs.push_back(Job{r, c, CTensor()});
  }

  const int threads = std::min<int>(env_thread_count(), static_cast<int>(jobs.size()));
  if (threads <= 1) {
    for (auto& j : jobs) j.probs = tile_predictor(extract_window(features, j.r, j.c, window));
  } else {
    std::vector<std::thread> pool;
    std::size_t next = 0;
    std::mutex mu;
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (;;) {
          std::size_t i;
          {
            std::lock_guard<std::mutex> lk(mu);
            if (next >= jobs.size()) return;
            i = next++;
          }
          jobs[i].probs = tile_predictor(extract_window(features, jobs[i].r, jobs[i].c, window));
        }
      });
    }
    for (auto& th : pool) th.join();
  }

  const int n_cls = jobs.front().probs.channels();
  CTensor acc = CTensor::zeros({n_cls, h, w});
  std::vector<double> cover(static_cast<std::size_t>(h) * w, 0.0);
  // fixed-order reduction: deterministic regardless of thread count
  for (const auto& j : jobs) {
    for (int c = 0; c < n_cls; ++c) {
      for (int i = 0; i < window; ++i) {
        for (int k = 0; k < window; ++k) {
          acc.re(c, j.r + i, j.c + k) += j.probs.re(c, i, k);
        }
      }
    }
    for (int i = 0; i < window; ++i) {
      for (int k = 0; k < window; ++k) {
        cover[static_cast<std::size_t>(j.r + i) * w + j.c + k] += 1.0;
      }
    }
  }
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (std::size_t p = 0; p < plane; ++p) {
    double sum = 0.0;
    for (int c = 0; c < n_cls; ++c) {
      acc.real[c * plane + p] /= cover[p];
      sum += acc.real[c * plane + p];
    }
    if (sum > 0.0) {
      for (int c = 0; c < n_cls; ++c) acc.real[c * plane + p] /= sum;
    }
  }
  return acc;
}

std::vector<std::uint16_t> argmax_map(const CTensor& probs) {
  const int n_cls = probs.channels();
  const std::size_t plane = static_cast<std::size_t>(probs.height()) * probs.width();
  std::vector<std::uint16_t> out(plane);
  for (std::size_t p = 0; p < plane; ++p) {
    int best = 0;
    double bv = probs.real[p];
    for (int c = 1; c < n_cls; ++c) {
      if (probs.real[c * plane + p] > bv) {
        bv = probs.real[c * plane + p];
        best = c;
      }
    }
    out[p] = static_cast<std::uint16_t>(best + 1);
  }
  return out;
}

std::vector<std::uint16_t> classify_patchwise(const Network& cs,
                                              const CTensor& features) {
  const int h = features.height(), w = features.width();
  const CTensor padded = mirror_pad(features, 5);
  std::vector<std::uint16_t> out(static_cast<std::size_t>(h) * w);
  // row-by-row sweep so timings are comparable with row-batched protocols
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      // window top-left at pixel + (kAlignOffset, kAlignOffset), padded by 5
      const CTensor patch =
          extract_window(padded, r + 5 + kAlignOffset, c + 5 + kAlignOffset, kPatchSize);
      const auto probs = patch_forward(cs, patch);
      int best = 0;
      for (std::size_t k = 1; k < probs.size(); ++k) {
        if (probs[k] > probs[best]) best = static_cast<int>(k);
      }
      out[static_cast<std::size_t>(r) * w + c] = static_cast<std::uint16_t>(best + 1);
    }
  }
  return out;
}

std::vector<int> receptive_field_chain(const NetworkSpec& spec) {
  std::vector<int> rf;
  int r = 1, jump = 1;
  for (const auto& l : spec.layers) {
    if (l.kind == "cconv" || l.kind == "cmaxpool") {
      r += (l.k - 1) * l.dilation * jump;
      jump *= l.stride;
      rf.push_back(r);
    }
  }
  return rf;
}

std::int64_t parameter_count(const Network& net) {
  std::int64_t n = 0;
  for (const auto& [name, l] : net.params.convs) {
    (void)name;
    n += 2 * static_cast<std::int64_t>(l.weights->size());
    n += 2 * static_cast<std::int64_t>(l.bias->size());
  }
  return n + 5;
}

}  // namespace crpm
