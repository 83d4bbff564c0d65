#include "crpm/serialize.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "crpm/errors.hpp"

namespace crpm {

namespace {

using ordered_json = nlohmann::ordered_json;

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    unsigned char b = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(&b), 1);
  }
}

void put_f32(std::ostream& os, float v) {
  std::uint32_t u;
  std::memcpy(&u, &v, 4);
  put_u32(os, u);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw DataError("model file truncated");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t get_u64(std::istream& is) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    unsigned char b;
    is.read(reinterpret_cast<char*>(&b), 1);
    if (!is) throw DataError("model file truncated");
    v |= static_cast<std::uint64_t>(b) << (8 * i);
  }
  return v;
}

float get_f32(std::istream& is) {
  std::uint32_t u = get_u32(is);
  float v;
  std::memcpy(&v, &u, 4);
  return v;
}

void write_tensor(std::ostream& os, const CTensor& t) {
  put_u32(os, static_cast<std::uint32_t>(t.shape.size()));
  for (int d : t.shape) put_u32(os, static_cast<std::uint32_t>(d));
  for (double v : t.real) put_f32(os, static_cast<float>(v));
  for (double v : t.imag) put_f32(os, static_cast<float>(v));
}

CTensor read_tensor(std::istream& is, const std::vector<int>& expect_shape) {
  std::uint32_t rank = get_u32(is);
  if (rank == 0 || rank > 8) throw DataError("model tensor: bad rank");
  std::vector<int> shape(rank);
  std::size_t n = 1;
  for (auto& d : shape) {
    std::uint32_t u = get_u32(is);
    if (u == 0 || u > (1u << 24)) throw DataError("model tensor: bad dimension");
    d = static_cast<int>(u);
    n *= u;
  }
  if (shape != expect_shape) throw DataError("model tensor: shape mismatch");
  CTensor t = CTensor::zeros(shape);
  for (std::size_t i = 0; i < n; ++i) t.real[i] = get_f32(is);
  for (std::size_t i = 0; i < n; ++i) t.imag[i] = get_f32(is);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(t.real[i]) || !std::isfinite(t.imag[i])) {
      throw DataError("model tensor: non-finite value");
    }
  }
  return t;
}

ordered_json config_to_json(const TrainConfig& c) {
  ordered_json j;
  j["lr_step1"] = c.lr_step1;
  j["lr_step2"] = c.lr_step2;
  j["batch_step1"] = c.batch_step1;
  j["batch_step2"] = c.batch_step2;
  j["epochs_step1"] = c.epochs_step1;
  j["epochs_step2"] = c.epochs_step2;
  j["focal_alpha"] = c.focal_alpha;
  j["focal_gamma"] = c.focal_gamma;
  j["w_train"] = c.w_train;
  j["w_error"] = c.w_error;
  j["w_else"] = c.w_else;
  j["per_class_count"] = c.per_class_count;
  j["max_rate"] = c.max_rate;
  j["seed"] = c.seed;
  return j;
}

TrainConfig config_from_json(const ordered_json& j) {
  TrainConfig c;
  c.lr_step1 = j.at("lr_step1").get<double>();
  c.lr_step2 = j.at("lr_step2").get<double>();
  c.batch_step1 = j.at("batch_step1").get<int>();
  c.batch_step2 = j.at("batch_step2").get<int>();
  c.epochs_step1 = j.at("epochs_step1").get<int>();
  c.epochs_step2 = j.at("epochs_step2").get<int>();
  c.focal_alpha = j.at("focal_alpha").get<double>();
  c.focal_gamma = j.at("focal_gamma").get<double>();
  c.w_train = j.at("w_train").get<double>();
  c.w_error = j.at("w_error").get<double>();
  c.w_else = j.at("w_else").get<double>();
  c.per_class_count = j.at("per_class_count").get<int>();
  c.max_rate = j.at("max_rate").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

}  // namespace

void save_model(const std::string& path, const Network& net,
                const std::vector<ChannelStats>& stats, const TrainConfig& cfg,
                std::uint64_t seed) {
  ordered_json header;
  header["kind"] = net.spec.kind;
  header["c_in"] = net.spec.c_in;
  header["n_cls"] = net.spec.n_cls;
  header["seed"] = seed;
  ordered_json jstats = ordered_json::array();
  for (const auto& s : stats) {
    jstats.push_back({{"mu_re", s.mu_re}, {"mu_im", s.mu_im}, {"sigma", s.sigma}});
  }
  header["stats"] = jstats;
  header["config"] = config_to_json(cfg);
  ordered_json tensors = ordered_json::array();
  for (const auto& [name, layer] : net.params.convs) {
    tensors.push_back({{"name", name + ".weights"}, {"shape", layer.weights->shape}});
    tensors.push_back({{"name", name + ".bias"}, {"shape", layer.bias->shape}});
  }
  tensors.push_back({{"name", "head"}, {"shape", std::vector<int>{5}}});
  header["tensors"] = tensors;

  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open for writing: " + path);
  os.write("CRPM", 4);
  put_u32(os, 1);
  std::string hs = header.dump();
  put_u64(os, hs.size());
  os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& [name, layer] : net.params.convs) {
    write_tensor(os, *layer.weights);
    write_tensor(os, *layer.bias);
  }
  const RiapHead& h = *net.params.head;
  CTensor ht = CTensor::zeros({5});
  ht.real = {h.w_re, h.w_im, h.w_mag, h.w_phase, h.bias};
  write_tensor(os, ht);
  if (!os) throw DataError("write failed: " + path);
}

LoadedModel load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open model file: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "CRPM", 4) != 0) {
    throw DataError("not a model file (bad magic): " + path);
  }
  std::uint32_t version = get_u32(is);
  if (version != 1) throw DataError("unsupported model version");
  std::uint64_t hlen = get_u64(is);
  if (hlen == 0 || hlen > (1u << 26)) throw DataError("model header: bad length");
  std::string hs(hlen, '\0');
  is.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!is) throw DataError("model file truncated");
  ordered_json header;
  try {
    header = ordered_json::parse(hs);
  } catch (const std::exception& e) {
    throw DataError(std::string("model header: invalid JSON: ") + e.what());
  }

  LoadedModel out;
  std::string kind = header.at("kind").get<std::string>();
  int c_in = header.at("c_in").get<int>();
  int n_cls = header.at("n_cls").get<int>();
  if (c_in <= 0 || n_cls <= 0) throw DataError("model header: bad dimensions");
  out.seed = header.at("seed").get<std::uint64_t>();
  for (const auto& s : header.at("stats")) {
    ChannelStats cs;
    cs.mu_re = s.at("mu_re").get<double>();
    cs.mu_im = s.at("mu_im").get<double>();
    cs.sigma = s.at("sigma").get<double>();
    out.stats.push_back(cs);
  }
  out.config = config_from_json(header.at("config"));

  if (kind == "cs") {
    out.net = build_cs_cnn(c_in, n_cls, 0);
  } else if (kind == "dilated") {
    out.net = transfer_to_dilated(build_cs_cnn(c_in, n_cls, 0));
  } else if (kind == "crpm") {
    out.net = build_crpm(build_cs_cnn(c_in, n_cls, 0), 0);
  } else {
    throw DataError("model header: unknown kind '" + kind + "'");
  }

  for (const auto& rec : header.at("tensors")) {
    std::string name = rec.at("name").get<std::string>();
    std::vector<int> shape = rec.at("shape").get<std::vector<int>>();
    if (name == "head") {
      CTensor ht = read_tensor(is, shape);
      if (ht.real.size() != 5) throw DataError("model head: expected 5 values");
      *out.net.params.head =
          RiapHead{ht.real[0], ht.real[1], ht.real[2], ht.real[3], ht.real[4]};
      continue;
    }
    auto dot = name.rfind('.');
    if (dot == std::string::npos) throw DataError("model tensor: bad name");
    std::string group = name.substr(0, dot);
    std::string plane = name.substr(dot + 1);
    CConvLayer& layer = out.net.params.find(group);
    if (plane == "weights") {
      *layer.weights = read_tensor(is, shape);
    } else if (plane == "bias") {
      *layer.bias = read_tensor(is, shape);
    } else {
      throw DataError("model tensor: bad name '" + name + "'");
    }
  }
  char extra;
  if (is.read(&extra, 1)) throw DataError("model file: trailing bytes");
  return out;
}

void save_pgm(const std::string& path, const std::vector<std::uint16_t>& map,
              int height, int width) {
  if (static_cast<std::size_t>(height) * width != map.size()) {
    throw ShapeError("save_pgm: size mismatch");
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open for writing: " + path);
  os << "P5\n" << width << " " << height << "\n255\n";
  std::vector<unsigned char> row(map.size());
  for (std::size_t i = 0; i < map.size(); ++i) {
    if (map[i] > 255) throw DataError("save_pgm: class id exceeds 255");
    row[i] = static_cast<unsigned char>(map[i]);
  }
  os.write(reinterpret_cast<const char*>(row.data()),
           static_cast<std::streamsize>(row.size()));
  if (!os) throw DataError("write failed: " + path);
}

PgmMap load_pgm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open map file: " + path);
  std::string magic;
  is >> magic;
  if (magic != "P5") throw DataError("not a P5 map file: " + path);
  int w = 0, h = 0, maxval = 0;
  is >> w >> h >> maxval;
  if (!is || w <= 0 || h <= 0 || maxval != 255) {
    throw DataError("bad map header: " + path);
  }
  is.get();  // single whitespace after maxval
  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h);
  is.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(raw.size()));
  if (!is) throw DataError("map file truncated: " + path);
  PgmMap out;
  out.height = h;
  out.width = w;
  out.values.assign(raw.begin(), raw.end());
  return out;
}

Palette default_palette(int n_cls) {
  // Entry 0 (unlabeled) is black; classes get well-separated hues.
  Palette p;
  p.push_back({0, 0, 0});
  for (int k = 0; k < n_cls; ++k) {
    double hue = 360.0 * k / n_cls;
    double c = 0.9, x = c * (1.0 - std::fabs(std::fmod(hue / 60.0, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    int sext = static_cast<int>(hue / 60.0) % 6;
    switch (sext) {
      case 0: r = c; g = x; break;
      case 1: r = x; g = c; break;
      case 2: g = c; b = x; break;
      case 3: g = x; b = c; break;
      case 4: r = x; b = c; break;
      default: r = c; b = x; break;
    }
    auto u8 = [](double v) { return static_cast<std::uint8_t>(v * 255.0 + 0.5); };
    p.push_back({u8(r + 0.05), u8(g + 0.05), u8(b + 0.05)});
  }
  return p;
}

void save_ppm(const std::string& path, const std::vector<std::uint16_t>& map,
              int height, int width, const Palette& palette) {
  if (static_cast<std::size_t>(height) * width != map.size()) {
    throw ShapeError("save_ppm: size mismatch");
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open for writing: " + path);
  os << "P6\n" << width << " " << height << "\n255\n";
  std::vector<unsigned char> buf;
  buf.reserve(map.size() * 3);
  for (std::uint16_t v : map) {
    if (v >= palette.size()) throw DataError("save_ppm: class id outside palette");
    buf.push_back(palette[v][0]);
    buf.push_back(palette[v][1]);
    buf.push_back(palette[v][2]);
  }
  os.write(reinterpret_cast<const char*>(buf.data()),
           static_cast<std::streamsize>(buf.size()));
  if (!os) throw DataError("write failed: " + path);
}

std::string palette_to_json(const Palette& palette) {
  ordered_json j;
  for (std::size_t k = 0; k < palette.size(); ++k) {
    j[std::to_string(k)] = {palette[k][0], palette[k][1], palette[k][2]};
  }
  return j.dump(2) + "\n";
}

}  // namespace crpm
