// SPDX-License-Identifier: Apache-2.0
#include "scenafuse/scenario.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "scenafuse/rng.hpp"

namespace scenafuse {

namespace {

std::uint64_t cell_key(const GridCell& cell, std::uint64_t seed) {
  std::uint64_t k = seed;
  k = derive_seed(k, "object:" + std::to_string(cell.object_class));
  k = derive_seed(k, "color:" + std::to_string(cell.color));
  k = derive_seed(k, "present:" + std::to_string(cell.present));
  return k;
}

constexpr char kMagic[4] = {'S', 'C', 'N', 'V'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(buf), 4);
}

std::uint32_t get_u32(std::istream& is, const char* what) {
  unsigned char buf[4];
  is.read(reinterpret_cast<char*>(buf), 4);
  if (is.gcount() != 4) throw std::runtime_error(std::string("features: truncated file at ") + what);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
  return v;
}

}  // namespace

VisualFeatures encode_scenario(const ScenarioGrid& grid, std::size_t d_prime,
                               std::uint64_t seed) {
  if (grid.size < 1) throw std::invalid_argument("encode_scenario: grid size must be >= 1");
  if (d_prime < 4) throw std::invalid_argument("encode_scenario: d' must be >= 4");
  if (grid.cells.size() != grid.size * grid.size) {
    throw std::invalid_argument("encode_scenario: grid has " +
                                std::to_string(grid.cells.size()) + " cells, expected " +
                                std::to_string(grid.size * grid.size));
  }
  const std::size_t k = grid.cells.size();
  Tensor blocks = Tensor::zeros({k, d_prime});
  for (std::size_t i = 0; i < k; ++i) {
    Rng rng(cell_key(grid.cells[i], seed));
    for (std::size_t j = 0; j < d_prime; ++j) blocks(i, j) = rng.normal();
  }
  return VisualFeatures{blocks, FeatureSource::synthetic};
}

void save_features(const std::string& path, const VisualFeatures& features) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("features: cannot open for write: " + path);
  os.write(kMagic, 4);
  put_u32(os, kVersion);
  put_u32(os, static_cast<std::uint32_t>(features.block_count()));
  put_u32(os, static_cast<std::uint32_t>(features.block_dim()));
  for (double v : features.blocks.data()) {
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(buf), 8);
  }
  if (!os) throw std::runtime_error("features: write failed: " + path);
}

VisualFeatures load_features(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("features: cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (is.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("features: bad magic in " + path);
  }
  const std::uint32_t version = get_u32(is, "version");
  if (version != kVersion) {
    throw std::runtime_error("features: unsupported version " + std::to_string(version));
  }
  const std::uint32_t k = get_u32(is, "block count");
  const std::uint32_t d = get_u32(is, "block dim");
  if (k == 0 || d == 0) {
    throw std::runtime_error("features: zero extent in header of " + path);
  }
  std::vector<double> data(static_cast<std::size_t>(k) * d);
  for (double& v : data) {
    unsigned char buf[8];
    is.read(reinterpret_cast<char*>(buf), 8);
    if (is.gcount() != 8) throw std::runtime_error("features: truncated data in " + path);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    v = std::bit_cast<double>(bits);
  }
  return VisualFeatures{Tensor({k, d}, std::move(data)), FeatureSource::file};
}

}  // namespace scenafuse
