#ifndef CRPM_GRADCHECK_HPP_
#define CRPM_GRADCHECK_HPP_

#include <cstdint>
#include <string>
#include <vector>

namespace crpm {

struct GradCheckCase {
  std::string op;
  double max_rel_err = 0.0;
  bool pass = false;
};

struct GradCheckOptions {
  std::uint64_t seed = 42;
  int instances = 20;
  double tolerance = 1e-5;
  double step = 1e-6;    // central-difference step
  std::string corrupt;   // op name whose analytic gradient is perturbed
};

// Central finite-difference validation of every differentiable operation and
// of the full patch-classifier composite. Returns one row per op; max_rel_err
// aggregates all instances and all checked components.
std::vector<GradCheckCase> run_gradcheck(const GradCheckOptions& options);

}  // namespace crpm

#endif  // CRPM_GRADCHECK_HPP_
