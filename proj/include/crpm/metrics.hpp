#ifndef CRPM_METRICS_HPP_
#define CRPM_METRICS_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "crpm/errors.hpp"

namespace crpm {

// counts[i*cls + j] = pixels of true class i predicted as class j.
// Accumulated in exact integer arithmetic; unlabeled pixels (label 0 in the
// external 1..K convention) are excluded before accumulation.
struct ConfusionMatrix {
  int cls = 0;
  std::vector<std::int64_t> counts;
  std::int64_t total = 0;

  explicit ConfusionMatrix(int n_cls)
      : cls(n_cls), counts(static_cast<std::size_t>(n_cls) * n_cls, 0) {}

  std::int64_t& at(int i, int j) { return counts[static_cast<std::size_t>(i) * cls + j]; }
  std::int64_t at(int i, int j) const { return counts[static_cast<std::size_t>(i) * cls + j]; }

  std::int64_t row_sum(int i) const;
  std::int64_t col_sum(int j) const;
  std::int64_t trace() const;
};

// pred/labels hold external class values: 0 = unlabeled (skipped), 1..cls.
ConfusionMatrix confusion(const std::vector<std::uint16_t>& pred,
                          const std::vector<std::uint16_t>& labels, int cls);

double overall_accuracy(const ConfusionMatrix& n);
double kappa(const ConfusionMatrix& n);
double fwiou(const ConfusionMatrix& n);
std::vector<double> per_class_accuracy(const ConfusionMatrix& n);

// {oa, kappa, fwiou, per_class_accuracy[], confusion[][]} in this order.
std::string metrics_report_json(const ConfusionMatrix& n);

}  // namespace crpm

#endif  // CRPM_METRICS_HPP_
