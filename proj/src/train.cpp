// SPDX-License-Identifier: Apache-2.0
#include "scenafuse/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <thread>

#include "scenafuse/rng.hpp"

namespace scenafuse {

namespace {

bool on_grid(double value, std::initializer_list<double> grid) {
  for (double g : grid) {
    if (value == g) return true;
  }
  return false;
}

bool on_grid(std::size_t value, std::initializer_list<std::size_t> grid) {
  for (std::size_t g : grid) {
    if (value == g) return true;
  }
  return false;
}

}  // namespace

void TrainConfig::validate() const {
  if (allow_off_grid) return;
  if (!on_grid(learning_rate, {1e-5, 2e-5, 3e-5, 5e-5})) {
    throw std::invalid_argument("train config: learning_rate off grid (set allow_off_grid)");
  }
  if (warmup_fraction != 0.1) {
    throw std::invalid_argument("train config: warmup_fraction off grid");
  }
  if (weight_decay != 1e-8) {
    throw std::invalid_argument("train config: weight_decay off grid");
  }
  if (!on_grid(batch_size, {std::size_t{16}, std::size_t{32}, std::size_t{64}})) {
    throw std::invalid_argument("train config: batch_size off grid");
  }
  if (!on_grid(dropout, {0.1, 0.2, 0.3})) {
    throw std::invalid_argument("train config: dropout off grid");
  }
  if (!on_grid(grad_clip, {7.0, 10.0, 15.0})) {
    throw std::invalid_argument("train config: grad_clip off grid");
  }
}

Metrics metrics_from_confusion(const std::array<std::array<std::size_t, 3>, 3>& confusion,
                               double mean_loss) {
  Metrics m;
  m.confusion = confusion;
  m.mean_loss = mean_loss;
  std::size_t total = 0, correct = 0;
  std::size_t tp_sum = 0, tp_fp_sum = 0, tp_fn_sum = 0;
  double macro_p = 0.0, macro_r = 0.0;
  for (std::size_t c = 0; c < 3; ++c) {
    const std::size_t tp = confusion[c][c];
    std::size_t fp = 0, fn = 0;
    for (std::size_t o = 0; o < 3; ++o) {
      total += confusion[c][o];
      if (o != c) {
        fp += confusion[o][c];
        fn += confusion[c][o];
      }
    }
    correct += tp;
    tp_sum += tp;
    tp_fp_sum += tp + fp;
    tp_fn_sum += tp + fn;
    macro_p += tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    macro_r += tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  }
  if (total == 0) throw std::invalid_argument("metrics: empty confusion matrix");
  m.accuracy = static_cast<double>(correct) / static_cast<double>(total);
  m.micro_precision = static_cast<double>(tp_sum) / static_cast<double>(tp_fp_sum);
  m.micro_recall = static_cast<double>(tp_sum) / static_cast<double>(tp_fn_sum);
  m.macro_precision = macro_p / 3.0;
  m.macro_recall = macro_r / 3.0;
  return m;
}

// --- optimizer -------------------------------------------------------------

AdamWState make_adamw_state(const NamedTensors& params) {
  AdamWState state;
  state.m.reserve(params.size());
  state.v.reserve(params.size());
  for (const auto& [name, tensor] : params) {
    state.m.emplace_back(tensor.numel(), 0.0);
    state.v.emplace_back(tensor.numel(), 0.0);
  }
  return state;
}

void adamw_step(const NamedTensors& params, AdamWState& state, double lr_t,
                double weight_decay) {
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  if (state.m.size() != params.size()) {
    throw std::invalid_argument("adamw_step: state does not match parameter list");
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = const_cast<Tensor&>(params[pi].second);
    std::span<const double> g = p.grad();
    std::span<double> w = p.data();
    std::vector<double>& m = state.m[pi];
    std::vector<double>& v = state.v[pi];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g.empty() ? 0.0 : g[i];
      m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
      v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      w[i] -= lr_t * (m_hat / (std::sqrt(v_hat) + eps) + weight_decay * w[i]);
    }
  }
}

double lr_at_step(std::size_t step, std::size_t total_steps, double base_lr,
                  double warmup_fraction) {
  if (total_steps == 0) throw std::invalid_argument("lr_at_step: total_steps is zero");
  if (step > total_steps) step = total_steps;
  const double warm = warmup_fraction * static_cast<double>(total_steps);
  const double s = static_cast<double>(step);
  if (s <= warm) {
    return warm == 0.0 ? base_lr : base_lr * s / warm;
  }
  const double tail = static_cast<double>(total_steps) - warm;
  return tail == 0.0 ? 0.0 : base_lr * (static_cast<double>(total_steps) - s) / tail;
}

double clip_gradients(const NamedTensors& params, double max_norm) {
  if (max_norm <= 0.0) throw std::invalid_argument("clip_gradients: max_norm must be > 0");
  double sq = 0.0;
  for (const auto& [name, tensor] : params) {
    for (double g : tensor.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return 1.0;
  const double scale = max_norm / norm;
  for (const auto& [name, tensor] : params) {
    Tensor& p = const_cast<Tensor&>(tensor);
    if (!p.has_grad()) continue;
    for (double& g : p.impl()->grad) g *= scale;
  }
  return scale;
}

// --- data plumbing -----------------------------------------------------------

PreparedDataset prepare_dataset(std::span<const ScenarioNLIExample> dataset,
                                const Vocabulary& vocab, std::size_t max_len,
                                std::size_t visual_dim, std::uint64_t scenario_seed) {
  PreparedDataset out;
  for (const ScenarioNLIExample& ex : dataset) {
    PreparedExample prepared;
    prepared.enc = encode_pair(ex.premise, ex.hypothesis, vocab, max_len);
    prepared.visual = encode_scenario(ex.grid, visual_dim, scenario_seed);
    prepared.label = ex.label;
    prepared.ambiguous = ex.ambiguous;
    if (ex.split == "train") out.train.push_back(std::move(prepared));
    else if (ex.split == "dev") out.dev.push_back(std::move(prepared));
    else if (ex.split == "test") out.test.push_back(std::move(prepared));
    else throw std::invalid_argument("prepare_dataset: unknown split '" + ex.split + "'");
  }
  return out;
}

// --- evaluation --------------------------------------------------------------

std::size_t eval_workers() {
  if (const char* env = std::getenv("SCENAFUSE_THREADS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n >= 1) return static_cast<std::size_t>(n);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return std::max(1u, std::min(hw, 4u));
}

Metrics evaluate(const Model& model, std::span<const PreparedExample> split,
                 std::size_t workers) {
  if (split.empty()) throw std::invalid_argument("evaluate: empty split");
  if (workers == 0) workers = eval_workers();
  workers = std::min(workers, split.size());

  std::vector<int> predictions(split.size());
  std::vector<double> losses(split.size());
  auto run_range = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const PreparedExample& ex = split[i];
      Tensor logits = model.logits(ex.enc, &ex.visual);
      int arg = 0;
      for (int c = 1; c < 3; ++c) {
        if (logits.data()[c] > logits.data()[arg]) arg = c;
      }
      predictions[i] = arg;
      const int label[1] = {ex.label};
      losses[i] = cross_entropy(logits, label).item();
    }
  };
  if (workers <= 1) {
    run_range(0, split.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (split.size() + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t begin = w * chunk;
      const std::size_t end = std::min(split.size(), begin + chunk);
      if (begin >= end) break;
      pool.emplace_back(run_range, begin, end);
    }
    for (std::thread& th : pool) th.join();
  }

  std::array<std::array<std::size_t, 3>, 3> confusion{};
  double loss_sum = 0.0;
  for (std::size_t i = 0; i < split.size(); ++i) {
    confusion[static_cast<std::size_t>(split[i].label)]
             [static_cast<std::size_t>(predictions[i])] += 1;
    loss_sum += losses[i];
  }
  Metrics m = metrics_from_confusion(confusion, loss_sum / static_cast<double>(split.size()));
  // Single-label full-coverage evaluation: the micro identity must hold exactly.
  if (m.micro_precision != m.accuracy || m.micro_recall != m.accuracy) {
    throw std::logic_error("evaluate: micro precision/recall diverged from accuracy");
  }
  return m;
}

// --- training ----------------------------------------------------------------

namespace {

std::vector<std::vector<double>> snapshot(const NamedTensors& params) {
  std::vector<std::vector<double>> out;
  out.reserve(params.size());
  for (const auto& [name, tensor] : params) {
    out.emplace_back(tensor.data().begin(), tensor.data().end());
  }
  return out;
}

void restore(const NamedTensors& params, const std::vector<std::vector<double>>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = const_cast<Tensor&>(params[i].second);
    std::copy(values[i].begin(), values[i].end(), p.data().begin());
  }
}

}  // namespace

TrainResult train(Model& model, const PreparedDataset& data, const TrainConfig& cfg,
                  const std::string& variant_name) {
  cfg.validate();
  if (data.train.empty()) throw std::invalid_argument("train: empty train split");
  if (data.dev.empty()) throw std::invalid_argument("train: empty dev split");

  NamedTensors params = model.parameters();
  AdamWState state = make_adamw_state(params);
  Rng shuffle_rng(derive_seed(cfg.seed, "shuffle"));
  Rng dropout_rng(derive_seed(cfg.seed, "dropout"));
  const DropoutCtx drop{cfg.dropout, &dropout_rng};

  const std::size_t n = data.train.size();
  const std::size_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_steps = cfg.epochs * steps_per_epoch;

  TrainResult result;
  std::vector<std::vector<double>> best = snapshot(params);
  double best_acc = -1.0, best_loss = 0.0;

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  std::size_t global_step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) {
      std::swap(order[i - 1], order[shuffle_rng.below(i)]);
    }
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t end = std::min(n, start + cfg.batch_size);
      const double inv_batch = 1.0 / static_cast<double>(end - start);
      for (auto& [name, tensor] : params) const_cast<Tensor&>(tensor).zero_grad();
      for (std::size_t bi = start; bi < end; ++bi) {
        const PreparedExample& ex = data.train[order[bi]];
        Tape tape;
        Tape::Scope scope(tape);
        Tensor logits = model.logits(ex.enc, &ex.visual, drop);
        const int label[1] = {ex.label};
        Tensor loss = cross_entropy(logits, label);
        const double loss_value = loss.item();
        if (!std::isfinite(loss_value)) {
          throw std::runtime_error("train: diverged (non-finite loss) at epoch " +
                                   std::to_string(epoch) + ", step " +
                                   std::to_string(global_step));
        }
        epoch_loss += loss_value;
        tape.backward(scale(loss, inv_batch));
      }
      clip_gradients(params, cfg.grad_clip);
      ++global_step;
      const double lr_t = lr_at_step(global_step, total_steps, cfg.learning_rate,
                                     cfg.warmup_fraction);
      adamw_step(params, state, lr_t, cfg.weight_decay);
    }
    result.train_epoch_loss.push_back(epoch_loss / static_cast<double>(n));

    const Metrics dev = evaluate(model, data.dev);
    result.history.push_back(EpochRecord{variant_name, "dev", epoch, dev});
    const bool better = dev.accuracy > best_acc ||
                        (dev.accuracy == best_acc && dev.mean_loss < best_loss);
    if (better) {
      best_acc = dev.accuracy;
      best_loss = dev.mean_loss;
      best = snapshot(params);
      result.best_epoch = epoch;
      result.best_dev = dev;
    }
  }
  restore(params, best);
  return result;
}

const std::vector<std::string>& ablation_variants() {
  static const std::vector<std::string> variants = {
      "full", "no-isi", "no-vesr", "no-srvr", "no-isf", "no-gm", "no-fm"};
  return variants;
}

std::vector<VariantResult> run_ablation(const ModelConfig& base_cfg,
                                        const PreparedDataset& data,
                                        const TrainConfig& train_cfg,
                                        std::uint64_t model_seed) {
  std::vector<VariantResult> rows;
  for (const std::string& variant : ablation_variants()) {
    ModelConfig cfg = base_cfg;
    cfg.ablation = AblationConfig::from_name(variant);
    Model model = Model::init(cfg, model_seed);
    VariantResult row;
    row.variant = variant;
    row.training = train(model, data, train_cfg, variant);
    row.test = evaluate(model, data.test);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace scenafuse
