#include "crpm/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "crpm/cops.hpp"
#include "crpm/ctensor.hpp"
#include "crpm/nets.hpp"
#include "crpm/rng.hpp"
#include "crpm/training.hpp"

namespace crpm {

namespace {

// Fault injection: scales every analytic derivative handed to the checker,
// simulating a wrong backward pass for the selected op.
double g_corrupt_scale = 1.0;

double rel_err(double analytic, double numeric) {
  return std::fabs(analytic - numeric) /
         std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
}

CTensor random_tensor(const std::vector<int>& shape, Rng& rng, double lo,
                      double hi) {
  CTensor t = CTensor::zeros(shape);
  for (auto& v : t.real) v = rng.uniform(lo, hi);
  for (auto& v : t.imag) v = rng.uniform(lo, hi);
  return t;
}

// Values bounded away from zero so kinked per-plane ops (ReLU, pooling ties)
// stay locally smooth under the finite-difference step.
CTensor random_signed_margin(const std::vector<int>& shape, Rng& rng) {
  CTensor t = CTensor::zeros(shape);
  auto draw = [&rng]() {
    double v = rng.uniform(0.2, 1.0);
    return rng.uniform() < 0.5 ? -v : v;
  };
  for (auto& v : t.real) v = draw();
  for (auto& v : t.imag) v = draw();
  return t;
}

// Fixed linear functional of a complex tensor: L = sum(cr*out_r + ci*out_i).
struct LinearLoss {
  CTensor coeff;
  explicit LinearLoss(const std::vector<int>& shape, Rng& rng)
      : coeff(random_tensor(shape, rng, -1.0, 1.0)) {}
  double operator()(const CTensor& out) const {
    double s = 0.0;
    for (std::size_t i = 0; i < out.real.size(); ++i) {
      s += coeff.real[i] * out.real[i] + coeff.imag[i] * out.imag[i];
    }
    return s;
  }
};

// One differentiable component: the value lives behind `slot`, the analytic
// derivative is read once from the backward pass.
struct Component {
  double* slot;
  double analytic;
};

double fd_max_err(const std::vector<Component>& comps,
                  const std::function<double()>& loss, double h) {
  double worst = 0.0;
  for (const auto& c : comps) {
    const double saved = *c.slot;
    *c.slot = saved + h;
    const double up = loss();
    *c.slot = saved - h;
    const double dn = loss();
    *c.slot = saved;
    const double numeric = (up - dn) / (2.0 * h);
    worst = std::max(worst, rel_err(c.analytic * g_corrupt_scale, numeric));
  }
  return worst;
}

void push_tensor(std::vector<Component>& comps, CTensor& value,
                 const CTensor& analytic) {
  for (std::size_t i = 0; i < value.real.size(); ++i) {
    comps.push_back({&value.real[i], analytic.real[i]});
    comps.push_back({&value.imag[i], analytic.imag[i]});
  }
}

double check_cconv(Rng& rng, double h, bool dilated) {
  CConvLayer layer;
  layer.weights = std::make_shared<CTensor>(random_tensor({3, 2, 3, 3}, rng, -0.7, 0.7));
  layer.bias = std::make_shared<CTensor>(random_tensor({3}, rng, -0.3, 0.3));
  if (dilated) {
    layer.stride = 1;
    layer.dilation = 2;
    layer.pad = {2, 2, 2, 2};
  } else {
    layer.stride = 1 + rng.uniform_int(2);
    layer.dilation = 1;
    layer.pad = {1, 1, 1, 1};
  }
  CTensor x = random_tensor({2, 7, 7}, rng, -1.0, 1.0);
  LinearLoss loss(cconv2d(x, layer).shape, rng);
  GradBundle g = cconv2d_backward(loss.coeff, x, layer);

  std::vector<Component> comps;
  push_tensor(comps, x, g.grad_input);
  push_tensor(comps, *layer.weights, g.grad_weights);
  push_tensor(comps, *layer.bias, g.grad_bias);
  return fd_max_err(comps, [&] { return loss(cconv2d(x, layer)); }, h);
}

double check_crelu(Rng& rng, double h) {
  CTensor x = random_signed_margin({3, 6, 6}, rng);
  LinearLoss loss(x.shape, rng);
  CTensor g = crelu_backward(loss.coeff, x);
  std::vector<Component> comps;
  push_tensor(comps, x, g);
  return fd_max_err(comps, [&] { return loss(crelu(x)); }, h);
}

double check_cmaxpool(Rng& rng, double h) {
  // Distinct, well-separated values keep the argmax stable across the step.
  CTensor x = CTensor::zeros({2, 8, 8});
  std::vector<int> order(x.real.size() * 2);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  rng.shuffle(order);
  for (std::size_t i = 0; i < x.real.size(); ++i) {
    x.real[i] = 0.01 * order[i];
    x.imag[i] = 0.01 * order[x.real.size() + i];
  }
  PoolGeom geom;
  const int pick = rng.uniform_int(3);
  if (pick == 1) geom = {2, 1, 1, PoolPad::kTopLeft};
  if (pick == 2) geom = {2, 1, 2, PoolPad::kBottomRight};
  PoolRecord rec = cmaxpool2d(x, geom);
  LinearLoss loss(rec.output.shape, rng);
  CTensor g = cmaxpool2d_backward(loss.coeff, rec);
  std::vector<Component> comps;
  push_tensor(comps, x, g);
  return fd_max_err(
      comps, [&] { return loss(cmaxpool2d(x, geom).output); }, h);
}

double check_ctransconv(Rng& rng, double h) {
  CConvLayer layer;
  layer.weights = std::make_shared<CTensor>(random_tensor({3, 2, 2, 2}, rng, -0.7, 0.7));
  layer.bias = std::make_shared<CTensor>(random_tensor({2}, rng, -0.3, 0.3));
  layer.stride = 2;
  CTensor x = random_tensor({3, 5, 5}, rng, -1.0, 1.0);
  LinearLoss loss(ctransconv2d(x, layer).shape, rng);
  GradBundle g = ctransconv2d_backward(loss.coeff, x, layer);
  std::vector<Component> comps;
  push_tensor(comps, x, g.grad_input);
  push_tensor(comps, *layer.weights, g.grad_weights);
  push_tensor(comps, *layer.bias, g.grad_bias);
  return fd_max_err(comps, [&] { return loss(ctransconv2d(x, layer)); }, h);
}

double check_riap_head(Rng& rng, double h) {
  CTensor z = random_signed_margin({4, 5, 5}, rng);  // |z| >= 0.2 per plane
  RiapHead head{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1),
                rng.uniform(-1, 1), rng.uniform(-1, 1)};
  LinearLoss loss(z.shape, rng);  // imag coeffs multiply a zero plane
  RiapGrad g = riap_head_backward(loss.coeff, z, head);
  std::vector<Component> comps;
  push_tensor(comps, z, g.grad_z);
  comps.push_back({&head.w_re, g.grad_head.w_re});
  comps.push_back({&head.w_im, g.grad_head.w_im});
  comps.push_back({&head.w_mag, g.grad_head.w_mag});
  comps.push_back({&head.w_phase, g.grad_head.w_phase});
  comps.push_back({&head.bias, g.grad_head.bias});
  return fd_max_err(comps, [&] { return loss(riap_head(z, head)); }, h);
}

std::vector<double> softmax_vec(const std::vector<double>& s) {
  double mx = *std::max_element(s.begin(), s.end());
  std::vector<double> p(s.size());
  double den = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) den += (p[i] = std::exp(s[i] - mx));
  for (auto& v : p) v /= den;
  return p;
}

double check_focal(Rng& rng, double h) {
  const int n = 3 + rng.uniform_int(3);
  std::vector<double> scores(n);
  for (auto& v : scores) v = rng.uniform(-2.0, 2.0);
  const int label = rng.uniform_int(n);
  const double alpha = 0.25, gamma = 2.0;
  auto loss = [&] { return focal_loss(softmax_vec(scores), label, alpha, gamma); };
  const auto analytic = focal_loss_grad_scores(softmax_vec(scores), label, alpha, gamma);
  std::vector<Component> comps;
  for (int i = 0; i < n; ++i) comps.push_back({&scores[i], analytic[i]});
  return fd_max_err(comps, loss, h);
}

double check_weighted_ce(Rng& rng, double h) {
  const int n_cls = 3;
  CTensor scores = random_tensor({n_cls, 4, 4}, rng, -2.0, 2.0);
  for (auto& v : scores.imag) v = 0.0;
  std::vector<std::uint16_t> labels(16);
  std::vector<double> weights(16);
  for (int i = 0; i < 16; ++i) {
    labels[i] = static_cast<std::uint16_t>(rng.uniform_int(n_cls));
    weights[i] = rng.uniform(0.5, 100.0);
  }
  auto loss = [&] {
    return weighted_cross_entropy(softmax_channels(scores), labels, weights);
  };
  CTensor analytic =
      weighted_cross_entropy_grad_scores(softmax_channels(scores), labels, weights);
  std::vector<Component> comps;
  for (std::size_t i = 0; i < scores.real.size(); ++i) {
    comps.push_back({&scores.real[i], analytic.real[i]});
  }
  return fd_max_err(comps, loss, h);
}

// Full patch-classifier composite: parameters of every group plus the head,
// validated on a random subset of components per instance.
double check_cs_cnn(Rng& rng, double h) {
  Network net = build_cs_cnn(2, 2, rng.uniform_int(1u << 30));
  // Nonzero head weights so magnitude/phase paths carry gradient.
  *net.params.head = RiapHead{0.8, -0.4, 0.3, 0.1, 0.05};
  CTensor patch = random_tensor({2, kPatchSize, kPatchSize}, rng, -1.0, 1.0);

  ChainTrace trace;
  chain_forward(net, patch, &trace, false);
  LinearLoss loss(trace.scores.shape, rng);
  ParamGrads grads = chain_backward(net, trace, loss.coeff);

  std::vector<Component> all;
  for (auto& [name, layer] : net.params.convs) {
    const GradBundle& g = grads.convs.at(name);
    push_tensor(all, *layer.weights, g.grad_weights);
    push_tensor(all, *layer.bias, g.grad_bias);
  }
  all.push_back({&net.params.head->w_re, grads.head.w_re});
  all.push_back({&net.params.head->w_im, grads.head.w_im});
  all.push_back({&net.params.head->w_mag, grads.head.w_mag});
  all.push_back({&net.params.head->w_phase, grads.head.w_phase});
  all.push_back({&net.params.head->bias, grads.head.bias});

  std::vector<int> idx(all.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  rng.shuffle(idx);
  std::vector<Component> subset;
  for (int i = 0; i < 40 && i < static_cast<int>(idx.size()); ++i) {
    subset.push_back(all[idx[i]]);
  }
  // Head weights are few and cheap; always included.
  for (std::size_t i = all.size() - 5; i < all.size(); ++i) subset.push_back(all[i]);

  return fd_max_err(
      subset, [&] { return loss(chain_forward(net, patch, nullptr, false)); }, h);
}

}  // namespace

std::vector<GradCheckCase> run_gradcheck(const GradCheckOptions& options) {
  struct Op {
    const char* name;
    std::function<double(Rng&, double)> fn;
  };
  const std::vector<Op> ops = {
      {"cconv2d", [](Rng& r, double h) { return check_cconv(r, h, false); }},
      {"cconv2d_dilated", [](Rng& r, double h) { return check_cconv(r, h, true); }},
      {"crelu", check_crelu},
      {"cmaxpool2d", check_cmaxpool},
      {"ctransconv2d", check_ctransconv},
      {"riap_head", check_riap_head},
      {"focal_loss", check_focal},
      {"weighted_cross_entropy", check_weighted_ce},
      {"cs_cnn_composite", check_cs_cnn},
  };

  std::vector<GradCheckCase> out;
  for (std::size_t k = 0; k < ops.size(); ++k) {
    Rng rng(options.seed + 0x100000001ull * (k + 1));
    GradCheckCase c;
    c.op = ops[k].name;
    g_corrupt_scale = (c.op == options.corrupt) ? 1.05 : 1.0;
    for (int i = 0; i < options.instances; ++i) {
      c.max_rel_err = std::max(c.max_rel_err, ops[k].fn(rng, options.step));
    }
    g_corrupt_scale = 1.0;
    c.pass = c.max_rel_err < options.tolerance;
    out.push_back(c);
  }
  return out;
}

}  // namespace crpm
