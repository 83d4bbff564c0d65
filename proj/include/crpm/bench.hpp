#ifndef CRPM_BENCH_HPP_
#define CRPM_BENCH_HPP_

#include <string>

#include "crpm/ctensor.hpp"
#include "crpm/nets.hpp"

namespace crpm {

struct BenchmarkReport {
  double patchwise_s = 0.0;
  double dilated_s = 0.0;
  double crpm_s = 0.0;
  double speedup_dilated = 0.0;
  double speedup_crpm = 0.0;
};

// Times whole-scene prediction three ways on the same features: row-batched
// patchwise Cs-CNN, dense dilated inference, and CRPM-Net tiled inference.
// Median of `runs` wall-clock measurements per path, same thread count.
BenchmarkReport run_benchmark(const Network& cs, const CTensor& features,
                              int runs = 3);

std::string benchmark_to_json(const BenchmarkReport& r);

}  // namespace crpm

#endif  // CRPM_BENCH_HPP_
