// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "scenafuse/scenario.hpp"
#include "scenafuse/vocab.hpp"

namespace scenafuse {

inline constexpr int kEntailment = 0;
inline constexpr int kNeutral = 1;
inline constexpr int kContradiction = 2;

/// Where the scenario semantics live inside a grid: cell 0 carries the
/// location marker, every other cell is distractor noise.
struct GridSemantics {
  static constexpr std::size_t location_cell = 0;
  static constexpr int outdoor_marker = 0;
  static constexpr int indoor_marker = 1;
  static constexpr int distractor_class_min = 2;
  static constexpr int distractor_class_count = 4;
  static constexpr int color_count = 4;
};

struct ScenarioNLIExample {
  std::vector<std::string> premise;
  std::vector<std::string> hypothesis;
  ScenarioGrid grid;
  int label = kEntailment;
  bool ambiguous = false;
  std::string split;  // train / dev / test

  bool operator==(const ScenarioNLIExample&) const = default;
};

struct GeneratorConfig {
  std::size_t train_count = 2000;
  std::size_t dev_count = 400;
  std::size_t test_count = 400;
  double ambiguous_fraction = 0.5;
  std::array<double, 3> class_targets{1.0 / 3, 1.0 / 3, 1.0 / 3};
  std::size_t grid_size = 3;
  std::uint64_t seed = 1;
};

/// Deterministic templated benchmark. Ambiguous pairs assert a location that
/// only the scenario can confirm and are emitted in matched pairs (one
/// entailing scenario, one contradicting) inside the same split.
std::vector<ScenarioNLIExample> generate_dataset(const GeneratorConfig& cfg);

/// The fixed 64-token vocabulary the templates draw from.
Vocabulary dataset_vocabulary();

/// Recomputes the label of any template-conforming pair from the rule table.
int derive_label(const std::vector<std::string>& premise,
                 const std::vector<std::string>& hypothesis, const ScenarioGrid& grid);

/// True when the hypothesis asserts a location, making the label
/// scenario-dependent.
bool is_ambiguous_hypothesis(const std::vector<std::string>& hypothesis);

/// Best accuracy any scenario-blind model can reach: per distinct text pair
/// the majority label frequency, dataset-weighted.
double text_only_bayes_accuracy(std::span<const ScenarioNLIExample> dataset);

/// Line-delimited JSON with fields premise, hypothesis, grid, label,
/// ambiguous, split.
void write_dataset(const std::string& path, std::span<const ScenarioNLIExample> dataset);
std::vector<ScenarioNLIExample> read_dataset(const std::string& path);

std::vector<std::string> split_tokens(const std::string& text);
std::string join_tokens(std::span<const std::string> tokens);

}  // namespace scenafuse
