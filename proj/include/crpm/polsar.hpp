#ifndef CRPM_POLSAR_HPP_
#define CRPM_POLSAR_HPP_

#include <array>
#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "crpm/ctensor.hpp"

namespace crpm {

// C3 plane order in the container and in CovarianceScene::planes.
enum C3Plane { kC11 = 0, kC12, kC13, kC22, kC23, kC33 };

// Per-pixel 3x3 Hermitian covariance, stored as the six unique complex
// entries. Labels are external 1..K with 0 = unlabeled.
struct CovarianceScene {
  int height = 0, width = 0;
  int class_count = 0;
  CTensor planes;  // 6 x H x W, order C11,C12,C13,C22,C23,C33
  std::vector<std::uint16_t> labels;  // empty when absent

  bool has_labels() const { return !labels.empty(); }
};

struct ChannelStats {
  double mu_re = 0.0, mu_im = 0.0, sigma = 1.0;
};

struct FeatureScene {
  CTensor features;
  std::vector<ChannelStats> stats;  // filled by zscore_normalize
};

inline constexpr double kDiagImag = 1e-8;
inline constexpr double kZscoreEps = 1e-12;
inline constexpr double kHermTol = 1e-6;

// 6-channel complex feature vector [C11,C22,C33,C12,C13,C23]; the diagonal
// channels carry imaginary part exactly 1e-8.
FeatureScene features_complex(const CovarianceScene& scene);

// 9-channel real vector [C11, Re C12, Im C12, C22, Re C13, Im C13, C33,
// Re C23, Im C23] (imaginary planes zero).
FeatureScene features_real(const CovarianceScene& scene);

// Per channel: subtract the complex mean, divide by the real RMS deviation
// sqrt(mean |x-mu|^2) + eps. Stats are retained for inference-time reuse.
FeatureScene zscore_normalize(const FeatureScene& f);

// Reapplies previously computed stats.
CTensor apply_zscore(const CTensor& features, const std::vector<ChannelStats>& stats);

struct SynthSpec {
  int classes = 3;
  int height = 192, width = 192;
  int looks = 4;
  std::string layout = "checkerboard";  // or "voronoi"
  std::uint64_t seed = 1;
  // Optional per-class covariance; when empty, well-separated matrices are
  // generated from the class index.
  std::vector<std::array<std::complex<double>, 9>> sigmas;  // row-major 3x3
};

// Multilook complex-Wishart sampling: per pixel of class k,
// C = (1/L) sum_i s_i s_i^H with s_i ~ CN(0, Sigma_k) via Cholesky.
CovarianceScene synth_wishart_scene(const SynthSpec& spec);

// Default well-separated Sigma_k for class k of n (also used by tests).
std::array<std::complex<double>, 9> default_class_sigma(int k, int n);

struct TilePlacement {
  int row = 0, col = 0;  // top-left in the (possibly padded) scene
};

struct TileSet {
  std::vector<TilePlacement> placements;
  std::vector<CTensor> tiles;
  int scene_h = 0, scene_w = 0;  // original extents
  int pad_margin = 0;            // mirror margin applied before tiling
};

// 128x128 windows at stride 64 covering every pixel; scenes smaller than the
// window are mirror-padded up. Placements allow exact reassembly.
TileSet tile_scene(const CTensor& features, int window = 128, int stride = 64);

// C3 container I/O (magic "C3PX", v1). Throws DataError on malformed files.
void save_c3(const std::string& path, const CovarianceScene& scene);
CovarianceScene load_c3(const std::string& path);

// Normalization-stats sidecar: UTF-8 JSON {channel: {mu_re, mu_im, sigma}}.
std::string stats_to_json(const std::vector<ChannelStats>& stats);
std::vector<ChannelStats> stats_from_json(const std::string& json);

}  // namespace crpm

#endif  // CRPM_POLSAR_HPP_
