#include "crpm/metrics.hpp"

#include <sstream>

namespace crpm {

std::int64_t ConfusionMatrix::row_sum(int i) const {
  std::int64_t s = 0;
  for (int j = 0; j < cls; ++j) s += at(i, j);
  return s;
}

std::int64_t ConfusionMatrix::col_sum(int j) const {
  std::int64_t s = 0;
  for (int i = 0; i < cls; ++i) s += at(i, j);
  return s;
}

std::int64_t ConfusionMatrix::trace() const {
  std::int64_t s = 0;
  for (int i = 0; i < cls; ++i) s += at(i, i);
  return s;
}

ConfusionMatrix confusion(const std::vector<std::uint16_t>& pred,
                          const std::vector<std::uint16_t>& labels, int cls) {
  if (pred.size() != labels.size()) throw ShapeError("confusion: size mismatch");
  ConfusionMatrix m(cls);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (labels[i] == 0) continue;
    if (labels[i] > cls || pred[i] == 0 || pred[i] > cls) {
      throw DataError("confusion: class value out of range");
    }
    ++m.at(labels[i] - 1, pred[i] - 1);
    ++m.total;
  }
  return m;
}

double overall_accuracy(const ConfusionMatrix& n) {
  if (n.total == 0) throw DataError("overall_accuracy: empty matrix");
  return static_cast<double>(n.trace()) / static_cast<double>(n.total);
}

double kappa(const ConfusionMatrix& n) {
  if (n.total == 0) throw DataError("kappa: empty matrix");
  std::int64_t chance = 0;  // sum_i row_i * col_i
  for (int i = 0; i < n.cls; ++i) chance += n.row_sum(i) * n.col_sum(i);
  const std::int64_t denom = n.total * n.total - chance;
  if (denom == 0) throw DataError("kappa: degenerate denominator");
  const std::int64_t numer = n.trace() * n.total - chance;
  return static_cast<double>(numer) / static_cast<double>(denom);
}

double fwiou(const ConfusionMatrix& n) {
  if (n.total == 0) throw DataError("fwiou: empty matrix");
  double s = 0.0;
  for (int i = 0; i < n.cls; ++i) {
    const std::int64_t row = n.row_sum(i);
    const std::int64_t uni = row + n.col_sum(i) - n.at(i, i);
    if (uni == 0) continue;  // class absent from both: weight 0
    s += (static_cast<double>(row) / static_cast<double>(n.total)) *
         (static_cast<double>(n.at(i, i)) / static_cast<double>(uni));
  }
  return s;
}

std::vector<double> per_class_accuracy(const ConfusionMatrix& n) {
  std::vector<double> acc(n.cls, 0.0);
  for (int i = 0; i < n.cls; ++i) {
    const std::int64_t row = n.row_sum(i);
    acc[i] = row == 0 ? 0.0 : static_cast<double>(n.at(i, i)) / static_cast<double>(row);
  }
  return acc;
}

std::string metrics_report_json(const ConfusionMatrix& n) {
  std::ostringstream os;
  os.precision(12);
  os << "{\"oa\": " << overall_accuracy(n) << ", \"kappa\": " << kappa(n)
     << ", \"fwiou\": " << fwiou(n) << ", \"per_class_accuracy\": [";
  const auto acc = per_class_accuracy(n);
  for (int i = 0; i < n.cls; ++i) os << (i ? ", " : "") << acc[i];
  os << "], \"confusion\": [";
  for (int i = 0; i < n.cls; ++i) {
    os << (i ? ", [" : "[");
    for (int j = 0; j < n.cls; ++j) os << (j ? ", " : "") << n.at(i, j);
    os << "]";
  }
  os << "]}";
  return os.str();
}

}  // namespace crpm
