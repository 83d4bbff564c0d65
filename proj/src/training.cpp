#include "crpm/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "crpm/rng.hpp"

namespace crpm {

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

void adam_update_vec(std::vector<double>& theta, const std::vector<double>& grad,
                     AdamState::Moments& mom, double lr, double bc1, double bc2) {
  if (mom.m.size() != theta.size()) {
    mom.m.assign(theta.size(), 0.0);
    mom.v.assign(theta.size(), 0.0);
  }
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double g = grad[i];
    mom.m[i] = kBeta1 * mom.m[i] + (1.0 - kBeta1) * g;
    mom.v[i] = kBeta2 * mom.v[i] + (1.0 - kBeta2) * g * g;
    const double mhat = mom.m[i] / bc1;
    const double vhat = mom.v[i] / bc2;
    theta[i] -= lr * mhat / (std::sqrt(vhat) + kAdamEps);
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (lr_step1 <= 0.0 || lr_step2 <= 0.0) throw TrainError("config: lr must be > 0");
  if (max_rate <= 0.0 || max_rate > 1.0) throw TrainError("config: rate must be in (0,1]");
  if (w_train <= 0.0 || w_error <= 0.0 || w_else <= 0.0) {
    throw TrainError("config: weights must be > 0");
  }
  if (per_class_count < 1 || batch_step1 < 1 || batch_step2 < 1) {
    throw TrainError("config: counts must be >= 1");
  }
  if (epochs_step1 < 0 || epochs_step2 < 0) throw TrainError("config: negative epochs");
  if (focal_alpha <= 0.0 || focal_gamma < 0.0) throw TrainError("config: bad focal params");
}

double focal_loss(const std::vector<double>& probs, int label, double alpha,
                  double gamma) {
  if (label < 0 || label >= static_cast<int>(probs.size())) {
    throw ShapeError("focal_loss: label out of range");
  }
  const double p = std::max(probs[label], kLogGuard);
  return -alpha * std::pow(1.0 - p, gamma) * std::log(p);
}

std::vector<double> focal_loss_grad_scores(const std::vector<double>& probs,
                                           int label, double alpha, double gamma) {
  const double p = std::max(probs[label], kLogGuard);
  const double one_m = 1.0 - p;
  double dldp = -alpha * std::pow(one_m, gamma) / p;
  if (gamma > 0.0 && one_m > 0.0) {
    dldp += alpha * gamma * std::pow(one_m, gamma - 1.0) * std::log(p);
  }
  std::vector<double> g(probs.size());
  for (std::size_t j = 0; j < probs.size(); ++j) {
    const double delta = (static_cast<int>(j) == label) ? 1.0 : 0.0;
    g[j] = dldp * p * (delta - probs[j]);
  }
  return g;
}

double weighted_cross_entropy(const CTensor& probs,
                              const std::vector<std::uint16_t>& labels,
                              const std::vector<double>& weights) {
  const int n_cls = probs.channels();
  const std::size_t plane = static_cast<std::size_t>(probs.height()) * probs.width();
  if (labels.size() != plane || weights.size() != plane) {
    throw ShapeError("weighted_cross_entropy: shape mismatch");
  }
  double num = 0.0, den = 0.0;
  for (std::size_t p = 0; p < plane; ++p) {
    const int lab = labels[p];
    if (lab < 0 || lab >= n_cls) throw ShapeError("weighted_cross_entropy: bad label");
    const double pv = std::max(probs.real[static_cast<std::size_t>(lab) * plane + p], kLogGuard);
    num += weights[p] * -std::log(pv);
    den += weights[p];
  }
  if (den <= 0.0) throw DataError("weighted_cross_entropy: zero total weight");
  return num / den;
}

CTensor weighted_cross_entropy_grad_scores(const CTensor& probs,
                                           const std::vector<std::uint16_t>& labels,
                                           const std::vector<double>& weights) {
  const int n_cls = probs.channels();
  const std::size_t plane = static_cast<std::size_t>(probs.height()) * probs.width();
  double den = 0.0;
  for (std::size_t p = 0; p < plane; ++p) den += weights[p];
  if (den <= 0.0) throw DataError("weighted_cross_entropy: zero total weight");
  CTensor g = CTensor::zeros(probs.shape);
  for (std::size_t p = 0; p < plane; ++p) {
    const int lab = labels[p];
    const double w = weights[p] / den;
    for (int c = 0; c < n_cls; ++c) {
      const double delta = (c == lab) ? 1.0 : 0.0;
      g.real[static_cast<std::size_t>(c) * plane + p] =
          w * (probs.real[static_cast<std::size_t>(c) * plane + p] - delta);
    }
  }
  return g;
}

void adam_step(NetworkParams& params, const ParamGrads& grads, AdamState& state,
               double lr) {
  ++state.step;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.step));
  for (const auto& [name, g] : grads.convs) {
    if (params.is_frozen(name)) continue;
    CConvLayer& layer = params.find(name);
    if (!g.grad_weights.same_shape(*layer.weights) ||
        !g.grad_bias.same_shape(*layer.bias)) {
      throw ShapeError("adam_step: gradient shape mismatch for " + name);
    }
    adam_update_vec(layer.weights->real, g.grad_weights.real,
                    state.moments[name + ".wr"], lr, bc1, bc2);
    adam_update_vec(layer.weights->imag, g.grad_weights.imag,
                    state.moments[name + ".wi"], lr, bc1, bc2);
    adam_update_vec(layer.bias->real, g.grad_bias.real,
                    state.moments[name + ".br"], lr, bc1, bc2);
    adam_update_vec(layer.bias->imag, g.grad_bias.imag,
                    state.moments[name + ".bi"], lr, bc1, bc2);
  }
  if (!params.is_frozen("head")) {
    RiapHead& h = *params.head;
    double* theta[5] = {&h.w_re, &h.w_im, &h.w_mag, &h.w_phase, &h.bias};
    const double gh[5] = {grads.head.w_re, grads.head.w_im, grads.head.w_mag,
                          grads.head.w_phase, grads.head.bias};
    for (int i = 0; i < 5; ++i) {
      state.head_m[i] = kBeta1 * state.head_m[i] + (1.0 - kBeta1) * gh[i];
      state.head_v[i] = kBeta2 * state.head_v[i] + (1.0 - kBeta2) * gh[i] * gh[i];
      *theta[i] -= lr * (state.head_m[i] / bc1) /
                   (std::sqrt(state.head_v[i] / bc2) + kAdamEps);
    }
  }
}

std::vector<TrainPixel> sample_training_pixels(
    const std::vector<std::uint16_t>& labels, int height, int width, int n_cls,
    int per_class_count, double max_rate, std::uint64_t seed) {
  if (labels.size() != static_cast<std::size_t>(height) * width) {
    throw ShapeError("sample_training_pixels: label map size mismatch");
  }
  std::vector<std::vector<std::size_t>> by_class(n_cls);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int lab = labels[i];
    if (lab == 0) continue;
    if (lab > n_cls) throw DataError("sample_training_pixels: label > class count");
    by_class[lab - 1].push_back(i);
  }
  Rng rng(seed);
  std::vector<TrainPixel> out;
  for (int k = 0; k < n_cls; ++k) {
    auto& idx = by_class[k];
    if (idx.empty()) {
      throw TrainError("sample_training_pixels: class " + std::to_string(k + 1) +
                       " has zero labeled pixels");
    }
    const std::size_t cap =
        static_cast<std::size_t>(std::floor(max_rate * static_cast<double>(idx.size())));
    const std::size_t take = std::min<std::size_t>(per_class_count, cap);
    // partial Fisher-Yates: first `take` entries are a uniform sample
    for (std::size_t i = 0; i < take; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.uniform_int(idx.size() - i));
      std::swap(idx[i], idx[j]);
      TrainPixel p;
      p.row = static_cast<int>(idx[i] / width);
      p.col = static_cast<int>(idx[i] % width);
      p.label = static_cast<std::uint16_t>(k + 1);
      out.push_back(p);
    }
  }
  return out;
}

RefinedLabels refine_score_map(const std::vector<std::uint16_t>& o_map,
                               int height, int width,
                               const std::vector<TrainPixel>& pixels,
                               const TrainConfig& cfg) {
  if (o_map.size() != static_cast<std::size_t>(height) * width) {
    throw ShapeError("refine_score_map: map size mismatch");
  }
  RefinedLabels r;
  r.labels = o_map;
  r.weights.assign(o_map.size(), cfg.w_else);
  for (const auto& p : pixels) {
    if (p.row < 0 || p.row >= height || p.col < 0 || p.col >= width) {
      throw ShapeError("refine_score_map: training pixel outside map");
    }
    const std::size_t i = static_cast<std::size_t>(p.row) * width + p.col;
    r.weights[i] = (o_map[i] == p.label) ? cfg.w_train : cfg.w_error;
    r.labels[i] = p.label;
  }
  return r;
}

Network train_step1(const CTensor& features,
                    const std::vector<std::uint16_t>& labels, int n_cls,
                    const TrainConfig& cfg, std::ostream* log) {
  cfg.validate();
  const int h = features.height(), w = features.width();
  auto pixels = sample_training_pixels(labels, h, w, n_cls, cfg.per_class_count,
                                       cfg.max_rate, cfg.seed);
  if (pixels.empty()) throw TrainError("train_step1: empty sample set");

  const CTensor padded = mirror_pad(features, 5);
  Network net = build_cs_cnn(features.channels(), n_cls, cfg.seed);

  AdamState adam;
  Rng order_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(pixels.size());
  std::iota(order.begin(), order.end(), 0);

  std::int64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs_step1; ++epoch) {
    order_rng.shuffle(order);
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_step1) {
      const std::size_t b1 = std::min(order.size(), b0 + cfg.batch_step1);
      ParamGrads batch_grads;
      double batch_loss = 0.0;
      for (std::size_t i = b0; i < b1; ++i) {
        const TrainPixel& p = pixels[order[i]];
        // pixel sits at window index (4,4): top-left = pixel + 5 (pad) - 4
        const CTensor patch =
            extract_window(padded, p.row + 5 + kAlignOffset,
                           p.col + 5 + kAlignOffset, kPatchSize);
        ChainTrace trace;
        const CTensor probs = chain_forward(net, patch, &trace, true);
        std::vector<double> pv(n_cls);
        for (int c = 0; c < n_cls; ++c) pv[c] = probs.re(c, 0, 0);
        batch_loss += focal_loss(pv, p.label - 1, cfg.focal_alpha, cfg.focal_gamma);
        const auto gs = focal_loss_grad_scores(pv, p.label - 1, cfg.focal_alpha,
                                               cfg.focal_gamma);
        CTensor grad_scores = CTensor::zeros({n_cls, 1, 1});
        for (int c = 0; c < n_cls; ++c) grad_scores.re(c, 0, 0) = gs[c];
        batch_grads.add(chain_backward(net, trace, grad_scores));
      }
      const double inv = 1.0 / static_cast<double>(b1 - b0);
      batch_grads.scale(inv);
      batch_loss *= inv;
      adam_step(net.params, batch_grads, adam, cfg.lr_step1);
      ++step;
      if (log) {
        (*log) << "epoch=" << epoch << " step=" << step << " loss=" << batch_loss
               << " lr=" << cfg.lr_step1 << "\n";
      }
    }
  }
  return net;
}

Step2Result train_step2(const CTensor& features,
                        const std::vector<std::uint16_t>& labels, int n_cls,
                        const Network& cs, const TrainConfig& cfg,
                        std::ostream* log) {
  cfg.validate();
  const int h = features.height(), w = features.width();

  Step2Result res;
  res.dilated = transfer_to_dilated(cs);

  // Step 5-6: tile sweep + dilated dense prediction O.
  const CTensor o_probs = sliding_inference(
      [&](const CTensor& tile) {
        return dense_forward(res.dilated, tile, true).scores;
      },
      features);
  res.o_map = argmax_map(o_probs);

  // Step 7: Algorithm-2 refinement on the same sampled pixel set as step 1.
  const auto pixels = sample_training_pixels(labels, h, w, n_cls,
                                             cfg.per_class_count, cfg.max_rate,
                                             cfg.seed);
  res.refined = refine_score_map(res.o_map, h, w, pixels, cfg);

  // Step 4: assembly.
  res.crpm = build_crpm(cs, cfg.seed ^ 0xc2b2ae3d27d4eb4fULL);

  // Step 8: weighted-CE training of decoder + fusion + head on tiles.
  // Scenes smaller than one tile are mirror-padded up; the refined label and
  // weight maps follow the same reflect-101 index mapping.
  int margin = 0;
  while (h + 2 * margin < kTileSize || w + 2 * margin < kTileSize) ++margin;
  const CTensor feat_padded = margin > 0 ? mirror_pad(features, margin) : features;
  const int hp = h + 2 * margin, wp = w + 2 * margin;
  const auto reflect = [](int i, int n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
    return i;
  };

  const auto row_offs = tile_offsets(hp, kTileSize, kTileStride);
  const auto col_offs = tile_offsets(wp, kTileSize, kTileStride);
  struct Tile {
    int r, c;
    CrpmFrozen frozen;
    std::vector<std::uint16_t> m;  // internal 0-based labels
    std::vector<double> wgt;
  };
  std::vector<Tile> tiles;
  for (int r : row_offs) {
    for (int c : col_offs) {
      Tile t;
      t.r = r;
      t.c = c;
      t.frozen =
          crpm_frozen_forward(res.crpm, extract_window(feat_padded, r, c, kTileSize));
      t.m.resize(static_cast<std::size_t>(kTileSize) * kTileSize);
      t.wgt.resize(t.m.size());
      for (int i = 0; i < kTileSize; ++i) {
        for (int j = 0; j < kTileSize; ++j) {
          const int si = reflect(r + i - margin, h);
          const int sj = reflect(c + j - margin, w);
          const std::size_t src = static_cast<std::size_t>(si) * w + sj;
          t.m[static_cast<std::size_t>(i) * kTileSize + j] =
              static_cast<std::uint16_t>(res.refined.labels[src] - 1);
          t.wgt[static_cast<std::size_t>(i) * kTileSize + j] = res.refined.weights[src];
        }
      }
      tiles.push_back(std::move(t));
    }
  }

  AdamState adam;
  Rng order_rng(cfg.seed ^ 0xa0761d6478bd642fULL);
  std::vector<std::size_t> order(tiles.size());
  std::iota(order.begin(), order.end(), 0);

  std::int64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs_step2; ++epoch) {
    order_rng.shuffle(order);
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_step2) {
      const std::size_t b1 = std::min(order.size(), b0 + cfg.batch_step2);
      ParamGrads batch_grads;
      double batch_loss = 0.0;
      for (std::size_t i = b0; i < b1; ++i) {
        const Tile& t = tiles[order[i]];
        CrpmTrace trace;
        const CTensor probs =
            crpm_trainable_forward(res.crpm, t.frozen, &trace, true);
        batch_loss += weighted_cross_entropy(probs, t.m, t.wgt);
        const CTensor gs = weighted_cross_entropy_grad_scores(probs, t.m, t.wgt);
        batch_grads.add(crpm_backward(res.crpm, trace, gs));
      }
      const double inv = 1.0 / static_cast<double>(b1 - b0);
      batch_grads.scale(inv);
      batch_loss *= inv;
      adam_step(res.crpm.params, batch_grads, adam, cfg.lr_step2);
      ++step;
      if (log) {
        (*log) << "epoch=" << epoch << " step=" << step << " loss=" << batch_loss
               << " lr=" << cfg.lr_step2 << "\n";
      }
    }
  }
  return res;
}

}  // namespace crpm
