#include "crpm/bench.hpp"

#include <algorithm>
#include <chrono>
#include <functional>
#include <sstream>
#include <vector>

#include "crpm/errors.hpp"

namespace crpm {

namespace {

double median3(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

double time_runs(const std::function<void()>& fn, int runs) {
  std::vector<double> times;
  for (int i = 0; i < runs; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  return median3(std::move(times));
}

}  // namespace

BenchmarkReport run_benchmark(const Network& cs, const CTensor& features,
                              int runs) {
  if (cs.spec.kind != "cs") throw DataError("benchmark: expected a Cs-CNN model");
  if (runs < 1) throw DataError("benchmark: runs must be >= 1");
  const Network dilated = transfer_to_dilated(cs);
  const Network crpm = build_crpm(cs, 1);

  BenchmarkReport r;
  r.patchwise_s =
      time_runs([&] { classify_patchwise(cs, features); }, runs);
  // The dilated network is fully convolutional, so its native dense mode runs
  // on the whole scene in one pass; only the CRPM fusion net structurally
  // requires 128x128 tiles.
  r.dilated_s = time_runs(
      [&] {
        const DenseOut d = dense_forward(dilated, features, true);
        argmax_map(d.scores);
      },
      runs);
  r.crpm_s = time_runs(
      [&] {
        sliding_inference([&](const CTensor& t) { return crpm_forward(crpm, t); },
                          features);
      },
      runs);
  r.speedup_dilated = r.patchwise_s / r.dilated_s;
  r.speedup_crpm = r.patchwise_s / r.crpm_s;
  return r;
}

std::string benchmark_to_json(const BenchmarkReport& r) {
  std::ostringstream os;
  os.precision(6);
  os << "{\"patchwise_s\": " << r.patchwise_s << ", \"dilated_s\": " << r.dilated_s
     << ", \"crpm_s\": " << r.crpm_s
     << ", \"speedup_dilated\": " << r.speedup_dilated
     << ", \"speedup_crpm\": " << r.speedup_crpm << "}";
  return os.str();
}

}  // namespace crpm
