// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "scenafuse/dataset.hpp"
#include "scenafuse/model.hpp"

namespace scenafuse {

/// Hyperparameters; values must come from the published grids unless
/// allow_off_grid is set.
struct TrainConfig {
  double learning_rate = 5e-5;   // {1e-5, 2e-5, 3e-5, 5e-5}
  double warmup_fraction = 0.1;
  double weight_decay = 1e-8;
  std::size_t batch_size = 32;   // {16, 32, 64}
  double dropout = 0.1;          // {0.1, 0.2, 0.3}
  double grad_clip = 10.0;       // {7.0, 10.0, 15.0}
  std::size_t epochs = 20;
  std::uint64_t seed = 7;
  bool allow_off_grid = false;

  void validate() const;
};

struct Metrics {
  double accuracy = 0.0;
  double micro_precision = 0.0;
  double micro_recall = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double mean_loss = 0.0;
  std::array<std::array<std::size_t, 3>, 3> confusion{};  // [true][predicted]
};

Metrics metrics_from_confusion(const std::array<std::array<std::size_t, 3>, 3>& confusion,
                               double mean_loss);

// --- optimizer -----------------------------------------------------------

struct AdamWState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::size_t step = 0;
};

AdamWState make_adamw_state(const NamedTensors& params);

/// Decoupled-weight-decay update using the gradients accumulated in params.
/// beta1 = 0.9, beta2 = 0.999, eps = 1e-8, with bias correction.
void adamw_step(const NamedTensors& params, AdamWState& state, double lr_t,
                double weight_decay);

/// Linear ramp 0 -> base over warmup_fraction * total_steps, then linear
/// decay to 0 at total_steps.
double lr_at_step(std::size_t step, std::size_t total_steps, double base_lr,
                  double warmup_fraction);

/// Scales all gradients so their global L2 norm is at most max_norm.
/// Returns the scale applied (1.0 when no clipping happened).
double clip_gradients(const NamedTensors& params, double max_norm);

// --- data plumbing ---------------------------------------------------------

struct PreparedExample {
  InputEncoding enc;
  VisualFeatures visual;
  int label = 0;
  bool ambiguous = false;
};

struct PreparedDataset {
  std::vector<PreparedExample> train, dev, test;
};

PreparedDataset prepare_dataset(std::span<const ScenarioNLIExample> dataset,
                                const Vocabulary& vocab, std::size_t max_len,
                                std::size_t visual_dim,
                                std::uint64_t scenario_seed = kDefaultScenarioSeed);

// --- training and evaluation ----------------------------------------------

struct EpochRecord {
  std::string variant;
  std::string split;
  std::size_t epoch = 0;
  Metrics metrics;
};

struct TrainResult {
  std::vector<EpochRecord> history;      // dev metrics per epoch
  std::vector<double> train_epoch_loss;  // mean train loss per epoch
  std::size_t best_epoch = 0;
  Metrics best_dev;
};

/// Number of evaluation workers: SCENAFUSE_THREADS when set, else
/// min(hardware, 4), at least 1.
std::size_t eval_workers();

/// Argmax predictions over a split; asserts the micro identity
/// micro_p == micro_r == accuracy.
Metrics evaluate(const Model& model, std::span<const PreparedExample> split,
                 std::size_t workers = 0);

/// Deterministic AdamW loop with warm-up, decay and clipping. Leaves the
/// model at the best-dev-accuracy parameters (ties broken by lower dev loss).
TrainResult train(Model& model, const PreparedDataset& data, const TrainConfig& cfg,
                  const std::string& variant_name = "full");

struct VariantResult {
  std::string variant;
  Metrics test;
  TrainResult training;
};

/// Trains {full, no-isi, no-vesr, no-srvr, no-isf, no-gm, no-fm} with the
/// same seed and config; returns one row per variant.
std::vector<VariantResult> run_ablation(const ModelConfig& base_cfg,
                                        const PreparedDataset& data,
                                        const TrainConfig& train_cfg,
                                        std::uint64_t model_seed);

const std::vector<std::string>& ablation_variants();

}  // namespace scenafuse
