#ifndef CRPM_TRAINING_HPP_
#define CRPM_TRAINING_HPP_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "crpm/nets.hpp"

namespace crpm {

// Training preconditions (empty sample set, missing classes, ...).
struct TrainError : std::runtime_error {
  explicit TrainError(const std::string& what) : std::runtime_error(what) {}
};

struct TrainConfig {
  double lr_step1 = 0.005;
  double lr_step2 = 0.001;
  int batch_step1 = 100;
  int batch_step2 = 5;  // tiles
  int epochs_step1 = 60;
  int epochs_step2 = 30;
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
  double w_train = 50.0;
  double w_error = 100.0;
  double w_else = 0.5;
  int per_class_count = 300;
  double max_rate = 0.1;
  std::uint64_t seed = 1;

  void validate() const;
};

// log-guard clamp for both losses
inline constexpr double kLogGuard = 1e-12;

// Eq.-style focal loss on one pixel's distribution: -alpha*(1-p)^gamma*ln(p).
double focal_loss(const std::vector<double>& probs, int label, double alpha,
                  double gamma);

// dL/dscores through the softmax for the focal loss.
std::vector<double> focal_loss_grad_scores(const std::vector<double>& probs,
                                           int label, double alpha, double gamma);

// Weight-normalized mean of per-pixel cross-entropy:
// sum_p W(p) * (-log p_{M(p)}) / sum_p W(p). Labels are internal 0-based.
double weighted_cross_entropy(const CTensor& probs,
                              const std::vector<std::uint16_t>& labels,
                              const std::vector<double>& weights);

// dL/dscores of the weighted cross-entropy (through the softmax).
CTensor weighted_cross_entropy_grad_scores(const CTensor& probs,
                                           const std::vector<std::uint16_t>& labels,
                                           const std::vector<double>& weights);

// Bias-corrected Adam, real and imaginary planes preconditioned
// independently. beta1=0.9, beta2=0.999, eps=1e-8.
struct AdamState {
  struct Moments {
    std::vector<double> m, v;
  };
  // per group: [w_re, w_im, b_re, b_im] keyed by "<name>.<plane>"
  std::map<std::string, Moments> moments;
  double head_m[5] = {0, 0, 0, 0, 0};
  double head_v[5] = {0, 0, 0, 0, 0};
  std::int64_t step = 0;
};

// Applies one Adam update for every gradient group that is not frozen in
// `params`. Frozen groups and the frozen head receive no update.
void adam_step(NetworkParams& params, const ParamGrads& grads, AdamState& state,
               double lr);

struct TrainPixel {
  int row = 0, col = 0;
  std::uint16_t label = 0;  // external 1..K
};

// Per class: min(per_class_count, floor(r * class_total)) pixels drawn
// uniformly without replacement; label 0 never drawn; seeded.
std::vector<TrainPixel> sample_training_pixels(
    const std::vector<std::uint16_t>& labels, int height, int width, int n_cls,
    int per_class_count, double max_rate, std::uint64_t seed);

struct RefinedLabels {
  std::vector<std::uint16_t> labels;   // M: dense class map, external 1..K
  std::vector<double> weights;         // W in {w_else, w_train, w_error}
};

// Algorithm-2 refinement: M = O except training pixels take the true label;
// W = w_else everywhere, w_error at misclassified training pixels, w_train
// at correct ones.
RefinedLabels refine_score_map(const std::vector<std::uint16_t>& o_map,
                               int height, int width,
                               const std::vector<TrainPixel>& pixels,
                               const TrainConfig& cfg);

// Step 1: trains the Cs-CNN with focal loss and Adam on 10x10 windows around
// sampled pixels. Emits "epoch=<n> step=<k> loss=<f> lr=<f>" lines.
Network train_step1(const CTensor& features,
                    const std::vector<std::uint16_t>& labels, int n_cls,
                    const TrainConfig& cfg, std::ostream* log);

struct Step2Result {
  Network crpm;
  Network dilated;
  std::vector<std::uint16_t> o_map;  // dilated dense prediction (audit)
  RefinedLabels refined;
};

// Steps 3-8: transfer, CRPM assembly, stride-64 tile sweep, dilated dense
// prediction, Algorithm-2 refinement, weighted-CE training of the decoder,
// fusion conv and head.
Step2Result train_step2(const CTensor& features,
                        const std::vector<std::uint16_t>& labels, int n_cls,
                        const Network& cs, const TrainConfig& cfg,
                        std::ostream* log);

}  // namespace crpm

#endif  // CRPM_TRAINING_HPP_
