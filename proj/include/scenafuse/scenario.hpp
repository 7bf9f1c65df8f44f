// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scenafuse/tensor.hpp"

namespace scenafuse {

/// One cell of a synthetic scenario grid.
struct GridCell {
  int object_class = 0;
  int color = 0;
  int present = 1;

  bool operator==(const GridCell&) const = default;
};

/// G x G grid of cell attributes standing in for an image. Cell (r, c) lives
/// at index r * G + c.
struct ScenarioGrid {
  std::size_t size = 0;  // G
  std::vector<GridCell> cells;

  static ScenarioGrid empty(std::size_t g) {
    ScenarioGrid grid;
    grid.size = g;
    grid.cells.assign(g * g, GridCell{});
    return grid;
  }
  const GridCell& at(std::size_t r, std::size_t c) const { return cells[r * size + c]; }
  GridCell& at(std::size_t r, std::size_t c) { return cells[r * size + c]; }

  bool operator==(const ScenarioGrid&) const = default;
};

enum class FeatureSource { synthetic, file };

/// k visual-block vectors of width d', the frozen image encoder's output.
struct VisualFeatures {
  Tensor blocks;  // k x d'
  FeatureSource source = FeatureSource::synthetic;

  std::size_t block_count() const { return blocks.rows(); }
  std::size_t block_dim() const { return blocks.cols(); }
};

inline constexpr std::uint64_t kDefaultScenarioSeed = 0x5343454e41ULL;

/// Frozen featurizer: block i is a fixed Gaussian embedding keyed solely by
/// cell i's attribute tuple, so identical cells map to identical vectors
/// across the whole dataset. Never updated by training.
VisualFeatures encode_scenario(const ScenarioGrid& grid, std::size_t d_prime,
                               std::uint64_t seed = kDefaultScenarioSeed);

/// "SCNV" feature file: magic, version u32, k u32, d' u32, then k*d' f64
/// little-endian values row-major.
void save_features(const std::string& path, const VisualFeatures& features);
VisualFeatures load_features(const std::string& path);

}  // namespace scenafuse
