#ifndef CRPM_RNG_HPP_
#define CRPM_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace crpm {

// Seeded RNG with explicitly coded distributions so that identical seeds
// give identical streams on every platform (std:: distributions are
// implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), n > 0. Rejection-free would bias for huge n;
  // n here is always pixel counts, far below 2^32, so modulo bias is < 2^-32.
  std::uint64_t uniform_int(std::uint64_t n) { return eng_() % n; }

  // Standard normal, Box-Muller with a cached spare.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925287 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace crpm

#endif  // CRPM_RNG_HPP_
