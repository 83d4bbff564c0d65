#include "crpm/polsar.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>

#include "crpm/nets.hpp"
#include "crpm/rng.hpp"
#include "json.hpp"

namespace crpm {

namespace {

constexpr char kMagic[4] = {'C', '3', 'P', 'X'};

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw DataError("c3: truncated header");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f32(std::ostream& os, float v) {
  std::uint32_t u;
  std::memcpy(&u, &v, 4);
  put_u32(os, u);
}

float get_f32(std::istream& is) {
  const std::uint32_t u = get_u32(is);
  float v;
  std::memcpy(&v, &u, 4);
  return v;
}

// Complex Cholesky of a 3x3 Hermitian PD matrix (row-major).
std::array<std::complex<double>, 9> cholesky3(const std::array<std::complex<double>, 9>& a) {
  using C = std::complex<double>;
  std::array<C, 9> l{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j <= i; ++j) {
      C s = a[i * 3 + j];
      for (int k = 0; k < j; ++k) s -= l[i * 3 + k] * std::conj(l[j * 3 + k]);
      if (i == j) {
        const double d = s.real();
        if (d <= 0.0 || std::abs(s.imag()) > 1e-9 * std::max(1.0, d)) {
          throw DataError("synth: covariance not Hermitian positive definite");
        }
        l[i * 3 + j] = std::sqrt(d);
      } else {
        l[i * 3 + j] = s / l[j * 3 + j].real();
      }
    }
  }
  return l;
}

}  // namespace

FeatureScene features_complex(const CovarianceScene& scene) {
  const int h = scene.height, w = scene.width;
  FeatureScene f;
  f.features = CTensor::zeros({6, h, w});
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  // output order [C11, C22, C33, C12, C13, C23]
  const int src[6] = {kC11, kC22, kC33, kC12, kC13, kC23};
  for (int c = 0; c < 6; ++c) {
    const std::size_t so = static_cast<std::size_t>(src[c]) * plane;
    const std::size_t dst = static_cast<std::size_t>(c) * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      f.features.real[dst + p] = scene.planes.real[so + p];
      f.features.imag[dst + p] = (c < 3) ? kDiagImag : scene.planes.imag[so + p];
    }
  }
  return f;
}

FeatureScene features_real(const CovarianceScene& scene) {
  const int h = scene.height, w = scene.width;
  FeatureScene f;
  f.features = CTensor::zeros({9, h, w});
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  struct Src {
    int plane;
    bool imag;
  };
  // Eq.-order [C11, Re C12, Im C12, C22, Re C13, Im C13, C33, Re C23, Im C23]
  const Src src[9] = {{kC11, false}, {kC12, false}, {kC12, true},
                      {kC22, false}, {kC13, false}, {kC13, true},
                      {kC33, false}, {kC23, false}, {kC23, true}};
  for (int c = 0; c < 9; ++c) {
    const std::size_t so = static_cast<std::size_t>(src[c].plane) * plane;
    const auto& buf = src[c].imag ? scene.planes.imag : scene.planes.real;
    for (std::size_t p = 0; p < plane; ++p) {
      f.features.real[static_cast<std::size_t>(c) * plane + p] = buf[so + p];
    }
  }
  return f;
}

FeatureScene zscore_normalize(const FeatureScene& f) {
  const int ch = f.features.channels();
  const std::size_t plane = static_cast<std::size_t>(f.features.height()) * f.features.width();
  FeatureScene out;
  out.features = f.features;
  out.stats.resize(ch);
  for (int c = 0; c < ch; ++c) {
    const std::size_t off = static_cast<std::size_t>(c) * plane;
    double mr = 0.0, mi = 0.0;
    for (std::size_t p = 0; p < plane; ++p) {
      mr += f.features.real[off + p];
      mi += f.features.imag[off + p];
    }
    mr /= static_cast<double>(plane);
    mi /= static_cast<double>(plane);
    double var = 0.0;
    for (std::size_t p = 0; p < plane; ++p) {
      const double dr = f.features.real[off + p] - mr;
      const double di = f.features.imag[off + p] - mi;
      var += dr * dr + di * di;
    }
    const double sigma = std::sqrt(var / static_cast<double>(plane)) + kZscoreEps;
    out.stats[c] = ChannelStats{mr, mi, sigma};
    for (std::size_t p = 0; p < plane; ++p) {
      out.features.real[off + p] = (f.features.real[off + p] - mr) / sigma;
      out.features.imag[off + p] = (f.features.imag[off + p] - mi) / sigma;
    }
  }
  return out;
}

CTensor apply_zscore(const CTensor& features, const std::vector<ChannelStats>& stats) {
  if (static_cast<int>(stats.size()) != features.channels()) {
    throw ShapeError("apply_zscore: stats channel mismatch");
  }
  CTensor out = features;
  const std::size_t plane = static_cast<std::size_t>(features.height()) * features.width();
  for (int c = 0; c < features.channels(); ++c) {
    const std::size_t off = static_cast<std::size_t>(c) * plane;
    const ChannelStats& s = stats[c];
    for (std::size_t p = 0; p < plane; ++p) {
      out.real[off + p] = (features.real[off + p] - s.mu_re) / s.sigma;
      out.imag[off + p] = (features.imag[off + p] - s.mu_im) / s.sigma;
    }
  }
  return out;
}

std::array<std::complex<double>, 9> default_class_sigma(int k, int n) {
  using C = std::complex<double>;
  const double theta = 6.283185307179586 * (k + 0.7) / std::max(1, n);
  const double p1 = std::pow(2.2, k);
  const double p2 = 0.5 * std::pow(2.2, n - 1 - k);
  const double p3 = 0.8 * (1.2 + std::sin(theta));
  const C r12 = 0.6 * std::polar(1.0, theta);
  const C r13 = 0.3 * std::polar(1.0, -0.5 * theta);
  const C r23 = 0.2 * std::polar(1.0, 2.0 * theta);
  const double s1 = std::sqrt(p1), s2 = std::sqrt(p2), s3 = std::sqrt(p3);
  return {C(p1, 0), r12 * s1 * s2, r13 * s1 * s3,
          std::conj(r12) * s1 * s2, C(p2, 0), r23 * s2 * s3,
          std::conj(r13) * s1 * s3, std::conj(r23) * s2 * s3, C(p3, 0)};
}

CovarianceScene synth_wishart_scene(const SynthSpec& spec) {
  if (spec.looks < 3) throw DataError("synth: looks must be >= 3");
  if (spec.classes < 2) throw DataError("synth: need at least 2 classes");
  const int h = spec.height, w = spec.width, kcls = spec.classes;

  std::vector<std::array<std::complex<double>, 9>> chol;
  for (int k = 0; k < kcls; ++k) {
    const auto sigma = (static_cast<int>(spec.sigmas.size()) > k)
                           ? spec.sigmas[k]
                           : default_class_sigma(k, kcls);
    chol.push_back(cholesky3(sigma));
  }

  Rng rng(spec.seed);

  // class layout
  std::vector<std::uint16_t> labels(static_cast<std::size_t>(h) * w, 0);
  if (spec.layout == "checkerboard") {
    const int block = std::max(8, std::min(h, w) / 6);
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        labels[static_cast<std::size_t>(i) * w + j] =
            static_cast<std::uint16_t>((i / block + j / block) % kcls + 1);
      }
    }
  } else if (spec.layout == "voronoi") {
    const int nseeds = 4 * kcls;
    std::vector<std::array<int, 3>> seeds;  // row, col, class
    for (int s = 0; s < nseeds; ++s) {
      seeds.push_back({static_cast<int>(rng.uniform_int(h)),
                       static_cast<int>(rng.uniform_int(w)), s % kcls + 1});
    }
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        long best = -1;
        int cls = 1;
        for (const auto& s : seeds) {
          const long d = static_cast<long>(i - s[0]) * (i - s[0]) +
                         static_cast<long>(j - s[1]) * (j - s[1]);
          if (best < 0 || d < best) {
            best = d;
            cls = s[2];
          }
        }
        labels[static_cast<std::size_t>(i) * w + j] = static_cast<std::uint16_t>(cls);
      }
    }
  } else {
    throw DataError("synth: unknown layout " + spec.layout);
  }

  CovarianceScene scene;
  scene.height = h;
  scene.width = w;
  scene.class_count = kcls;
  scene.planes = CTensor::zeros({6, h, w});
  scene.labels = labels;

  using C = std::complex<double>;
  const double inv_looks = 1.0 / spec.looks;
  const double inv_sqrt2 = 0.7071067811865475244;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (std::size_t p = 0; p < plane; ++p) {
    const auto& l = chol[labels[p] - 1];
    C c11 = 0, c12 = 0, c13 = 0, c22 = 0, c23 = 0, c33 = 0;
    for (int look = 0; look < spec.looks; ++look) {
      C g[3];
      for (auto& gi : g) gi = C(rng.normal(), rng.normal()) * inv_sqrt2;
      const C s0 = l[0] * g[0];
      const C s1 = l[3] * g[0] + l[4] * g[1];
      const C s2 = l[6] * g[0] + l[7] * g[1] + l[8] * g[2];
      c11 += s0 * std::conj(s0);
      c12 += s0 * std::conj(s1);
      c13 += s0 * std::conj(s2);
      c22 += s1 * std::conj(s1);
      c23 += s1 * std::conj(s2);
      c33 += s2 * std::conj(s2);
    }
    scene.planes.real[kC11 * plane + p] = c11.real() * inv_looks;
    scene.planes.real[kC12 * plane + p] = c12.real() * inv_looks;
    scene.planes.imag[kC12 * plane + p] = c12.imag() * inv_looks;
    scene.planes.real[kC13 * plane + p] = c13.real() * inv_looks;
    scene.planes.imag[kC13 * plane + p] = c13.imag() * inv_looks;
    scene.planes.real[kC22 * plane + p] = c22.real() * inv_looks;
    scene.planes.real[kC23 * plane + p] = c23.real() * inv_looks;
    scene.planes.imag[kC23 * plane + p] = c23.imag() * inv_looks;
    scene.planes.real[kC33 * plane + p] = c33.real() * inv_looks;
  }
  return scene;
}

TileSet tile_scene(const CTensor& features, int window, int stride) {
  TileSet ts;
  ts.scene_h = features.height();
  ts.scene_w = features.width();
  const CTensor* src = &features;
  CTensor padded;
  // Reflect-101 caps one application at margin < extent, so very small
  // scenes are padded in steps.
  while (src->height() < window || src->width() < window) {
    if (std::min(src->height(), src->width()) < 2) {
      throw ShapeError("tile_scene: scene too small to mirror up");
    }
    int margin = 0;
    if (src->height() < window)
      margin = std::max(margin, (window - src->height() + 1) / 2);
    if (src->width() < window)
      margin = std::max(margin, (window - src->width() + 1) / 2);
    margin = std::min(margin, std::min(src->height(), src->width()) - 1);
    padded = mirror_pad(*src, margin);
    ts.pad_margin += margin;
    src = &padded;
  }
  for (int r : tile_offsets(src->height(), window, stride)) {
    for (int c : tile_offsets(src->width(), window, stride)) {
      ts.placements.push_back(TilePlacement{r, c});
      ts.tiles.push_back(extract_window(*src, r, c, window));
    }
  }
  return ts;
}

void save_c3(const std::string& path, const CovarianceScene& scene) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("c3: cannot open " + path + " for writing");
  os.write(kMagic, 4);
  put_u32(os, 1);
  put_u32(os, static_cast<std::uint32_t>(scene.height));
  put_u32(os, static_cast<std::uint32_t>(scene.width));
  put_u32(os, scene.has_labels() ? 1u : 0u);
  const std::size_t plane = static_cast<std::size_t>(scene.height) * scene.width;
  for (int c = 0; c < 6; ++c) {
    for (std::size_t p = 0; p < plane; ++p) {
      put_f32(os, static_cast<float>(scene.planes.real[c * plane + p]));
      put_f32(os, static_cast<float>(scene.planes.imag[c * plane + p]));
    }
  }
  if (scene.has_labels()) {
    for (std::size_t p = 0; p < plane; ++p) {
      const std::uint16_t v = scene.labels[p];
      const unsigned char b[2] = {static_cast<unsigned char>(v),
                                  static_cast<unsigned char>(v >> 8)};
      os.write(reinterpret_cast<const char*>(b), 2);
    }
  }
  if (!os) throw DataError("c3: write failed for " + path);
}

CovarianceScene load_c3(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("c3: cannot open " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw DataError("c3: bad magic in " + path);
  }
  const std::uint32_t version = get_u32(is);
  if (version != 1) throw DataError("c3: unsupported version");
  const int h = static_cast<int>(get_u32(is));
  const int w = static_cast<int>(get_u32(is));
  const std::uint32_t flags = get_u32(is);
  if (h <= 0 || w <= 0) throw DataError("c3: bad dimensions");

  CovarianceScene scene;
  scene.height = h;
  scene.width = w;
  scene.planes = CTensor::zeros({6, h, w});
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  bool herm_warned = false;
  for (int c = 0; c < 6; ++c) {
    const bool diag = (c == kC11 || c == kC22 || c == kC33);
    for (std::size_t p = 0; p < plane; ++p) {
      const double re = get_f32(is);
      double im = get_f32(is);
      if (!std::isfinite(re) || !std::isfinite(im)) {
        throw DataError("c3: non-finite value in " + path);
      }
      if (diag && im != 0.0) {
        if (!herm_warned && std::abs(im) > kHermTol * std::max(1.0, std::abs(re))) {
          std::cerr << "warning: c3 diagonal imaginary part exceeds tolerance; "
                       "coercing to real\n";
          herm_warned = true;
        }
        im = 0.0;
      }
      scene.planes.real[c * plane + p] = re;
      scene.planes.imag[c * plane + p] = im;
    }
  }
  if (flags & 1u) {
    scene.labels.resize(plane);
    for (std::size_t p = 0; p < plane; ++p) {
      unsigned char b[2];
      if (!is.read(reinterpret_cast<char*>(b), 2)) {
        throw DataError("c3: truncated label payload");
      }
      scene.labels[p] = static_cast<std::uint16_t>(b[0] | (b[1] << 8));
      scene.class_count = std::max<int>(scene.class_count, scene.labels[p]);
    }
  }
  // exactly-sized payload
  is.peek();
  if (!is.eof()) throw DataError("c3: trailing bytes in " + path);
  return scene;
}

std::string stats_to_json(const std::vector<ChannelStats>& stats) {
  nlohmann::ordered_json j;
  for (std::size_t c = 0; c < stats.size(); ++c) {
    j[std::to_string(c)] = {{"mu_re", stats[c].mu_re},
                            {"mu_im", stats[c].mu_im},
                            {"sigma", stats[c].sigma}};
  }
  return j.dump();
}

std::vector<ChannelStats> stats_from_json(const std::string& json) {
  const auto j = nlohmann::json::parse(json);
  std::vector<ChannelStats> stats(j.size());
  for (std::size_t c = 0; c < stats.size(); ++c) {
    const auto& e = j.at(std::to_string(c));
    stats[c] = ChannelStats{e.at("mu_re").get<double>(), e.at("mu_im").get<double>(),
                            e.at("sigma").get<double>()};
  }
  return stats;
}

}  // namespace crpm
