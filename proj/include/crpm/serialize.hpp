#ifndef CRPM_SERIALIZE_HPP_
#define CRPM_SERIALIZE_HPP_

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "crpm/nets.hpp"
#include "crpm/polsar.hpp"
#include "crpm/training.hpp"

namespace crpm {

// Model container: magic "CRPM", u32 LE version 1, u64 LE header length,
// UTF-8 JSON header, then shape-prefixed f32 tensor payloads (real plane
// then imaginary plane) in header order.
void save_model(const std::string& path, const Network& net,
                const std::vector<ChannelStats>& stats, const TrainConfig& cfg,
                std::uint64_t seed);

struct LoadedModel {
  Network net;
  std::vector<ChannelStats> stats;
  TrainConfig config;
  std::uint64_t seed = 0;
};

LoadedModel load_model(const std::string& path);

// Class maps as binary PGM (P5, maxval 255, 0 = unlabeled).
void save_pgm(const std::string& path, const std::vector<std::uint16_t>& map,
              int height, int width);
struct PgmMap {
  int height = 0, width = 0;
  std::vector<std::uint16_t> values;
};
PgmMap load_pgm(const std::string& path);

// Color rendering (P6) through a class -> RGB palette.
using Palette = std::vector<std::array<std::uint8_t, 3>>;
Palette default_palette(int n_cls);
void save_ppm(const std::string& path, const std::vector<std::uint16_t>& map,
              int height, int width, const Palette& palette);
std::string palette_to_json(const Palette& palette);

}  // namespace crpm

#endif  // CRPM_SERIALIZE_HPP_
