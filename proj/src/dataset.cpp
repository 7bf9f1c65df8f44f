// SPDX-License-Identifier: Apache-2.0
#include "scenafuse/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "scenafuse/rng.hpp"

namespace scenafuse {

namespace {

const std::vector<std::string> kAgents = {
    "people", "kids", "men", "women", "dogs", "students",
    "friends", "workers", "teams", "children", "artists", "players"};
const std::vector<std::string> kActions = {
    "play", "watch", "like", "share", "enjoy", "choose",
    "practice", "start", "finish", "prefer", "love", "join"};
const std::vector<std::string> kObjects = {
    "ball", "games", "music", "food", "books", "chess", "soccer",
    "cards", "puzzles", "stories", "pictures", "songs", "drums", "kites"};
const std::vector<std::string> kLocations = {"outside", "inside"};
const std::vector<std::string> kNegation = {"do", "not"};
const std::vector<std::string> kAdverbs = {
    "happily", "quietly", "together", "daily", "often",
    "calmly", "loudly", "eagerly", "gladly", "soon"};
const std::vector<std::string> kMisc = {"with", "the", "a", "new",
                                        "old", "some", "more", "today"};

bool contains(const std::vector<std::string>& tokens, const std::string& word) {
  return std::find(tokens.begin(), tokens.end(), word) != tokens.end();
}

template <typename T>
const T& pick(const std::vector<T>& pool, Rng& rng) {
  return pool[rng.below(pool.size())];
}

ScenarioGrid random_grid(std::size_t g, int location_marker, Rng& rng) {
  ScenarioGrid grid = ScenarioGrid::empty(g);
  grid.cells[GridSemantics::location_cell] =
      GridCell{location_marker, /*color=*/0, /*present=*/1};
  for (std::size_t i = 0; i < grid.cells.size(); ++i) {
    if (i == GridSemantics::location_cell) continue;
    grid.cells[i].object_class =
        GridSemantics::distractor_class_min +
        static_cast<int>(rng.below(GridSemantics::distractor_class_count));
    grid.cells[i].color = static_cast<int>(rng.below(GridSemantics::color_count));
    grid.cells[i].present = static_cast<int>(rng.below(2));
  }
  return grid;
}

std::string example_key(const ScenarioNLIExample& ex) {
  std::ostringstream os;
  os << join_tokens(ex.premise) << '\x1f' << join_tokens(ex.hypothesis) << '\x1f'
     << ex.grid.size;
  for (const GridCell& c : ex.grid.cells) {
    os << ',' << c.object_class << ':' << c.color << ':' << c.present;
  }
  return os.str();
}

struct SplitPlan {
  std::string name;
  std::size_t count;
};

void generate_split(const GeneratorConfig& cfg, const SplitPlan& plan,
                    std::unordered_set<std::string>& used,
                    std::vector<ScenarioNLIExample>& out) {
  Rng rng(derive_seed(cfg.seed, "split:" + plan.name));
  const std::size_t n = plan.count;
  if (n == 0) return;

  const std::size_t units =
      static_cast<std::size_t>(std::llround(n * cfg.ambiguous_fraction / 2.0));
  const std::size_t n_amb = 2 * units;
  std::size_t target_e = static_cast<std::size_t>(std::llround(n * cfg.class_targets[0]));
  std::size_t target_n = static_cast<std::size_t>(std::llround(n * cfg.class_targets[1]));
  if (target_e + target_n > n) target_n = n - target_e;
  const std::size_t target_c = n - target_e - target_n;
  if (target_e < units || target_c < units) {
    throw std::invalid_argument(
        "generate_dataset: infeasible balance targets for split " + plan.name +
        ": ambiguous pairs alone need " + std::to_string(units) +
        " entailment and contradiction examples each");
  }
  const std::size_t rem_e = target_e - units;
  const std::size_t rem_c = target_c - units;
  const std::size_t rem_n = target_n;
  if (rem_e + rem_c + rem_n != n - n_amb) {
    throw std::invalid_argument(
        "generate_dataset: class targets do not cover split " + plan.name);
  }

  std::vector<ScenarioNLIExample> split;
  split.reserve(n);

  auto emit = [&](ScenarioNLIExample ex) {
    constexpr int kMaxRetries = 64;
    ex.split = plan.name;
    for (int attempt = 0; attempt < kMaxRetries; ++attempt) {
      const std::string key = example_key(ex);
      if (used.insert(key).second) {
        split.push_back(std::move(ex));
        return;
      }
      // Same text resampled with fresh distractor noise.
      const int marker = ex.grid.cells[GridSemantics::location_cell].object_class;
      ex.grid = random_grid(cfg.grid_size, marker, rng);
    }
    throw std::runtime_error("generate_dataset: could not find a unique scenario");
  };

  for (std::size_t u = 0; u < units; ++u) {
    const std::string& agent = pick(kAgents, rng);
    const std::string& action = pick(kActions, rng);
    const std::string& object = pick(kObjects, rng);
    const std::string& location = pick(kLocations, rng);
    const int asserted = location == "outside" ? GridSemantics::outdoor_marker
                                               : GridSemantics::indoor_marker;
    const int opposite = asserted == GridSemantics::outdoor_marker
                             ? GridSemantics::indoor_marker
                             : GridSemantics::outdoor_marker;
    ScenarioNLIExample match;
    match.premise = {agent, action, object};
    match.hypothesis = {agent, action, object, location};
    match.grid = random_grid(cfg.grid_size, asserted, rng);
    match.label = kEntailment;
    match.ambiguous = true;
    emit(std::move(match));

    ScenarioNLIExample clash;
    clash.premise = {agent, action, object};
    clash.hypothesis = {agent, action, object, location};
    clash.grid = random_grid(cfg.grid_size, opposite, rng);
    clash.label = kContradiction;
    clash.ambiguous = true;
    emit(std::move(clash));
  }

  auto random_marker = [&rng]() {
    return rng.below(2) == 0 ? GridSemantics::outdoor_marker
                             : GridSemantics::indoor_marker;
  };

  for (std::size_t i = 0; i < rem_e; ++i) {
    const std::string& agent = pick(kAgents, rng);
    const std::string& action = pick(kActions, rng);
    const std::string& object = pick(kObjects, rng);
    ScenarioNLIExample ex;
    ex.premise = {agent, action, object};
    ex.hypothesis = rng.below(2) == 0
                        ? std::vector<std::string>{agent, action, object}
                        : std::vector<std::string>{agent, action};
    ex.grid = random_grid(cfg.grid_size, random_marker(), rng);
    ex.label = kEntailment;
    ex.ambiguous = false;
    emit(std::move(ex));
  }

  for (std::size_t i = 0; i < rem_c; ++i) {
    const std::string& agent = pick(kAgents, rng);
    const std::string& action = pick(kActions, rng);
    const std::string& object = pick(kObjects, rng);
    ScenarioNLIExample ex;
    ex.premise = {agent, action, object};
    ex.hypothesis = {agent, "do", "not", action, object};
    ex.grid = random_grid(cfg.grid_size, random_marker(), rng);
    ex.label = kContradiction;
    ex.ambiguous = false;
    emit(std::move(ex));
  }

  for (std::size_t i = 0; i < rem_n; ++i) {
    const std::string& agent = pick(kAgents, rng);
    const std::string& action = pick(kActions, rng);
    const std::string& object = pick(kObjects, rng);
    ScenarioNLIExample ex;
    ex.premise = {agent, action, object};
    if (rng.below(2) == 0) {
      ex.hypothesis = {agent, action, object, pick(kAdverbs, rng)};
    } else {
      std::string other = pick(kAgents, rng);
      while (other == agent) other = pick(kAgents, rng);
      ex.hypothesis = {agent, action, object, "with", other};
    }
    ex.grid = random_grid(cfg.grid_size, random_marker(), rng);
    ex.label = kNeutral;
    ex.ambiguous = false;
    emit(std::move(ex));
  }

  // Fisher-Yates so splits interleave example kinds deterministically.
  for (std::size_t i = split.size(); i > 1; --i) {
    std::swap(split[i - 1], split[rng.below(i)]);
  }
  for (ScenarioNLIExample& ex : split) out.push_back(std::move(ex));
}

}  // namespace

std::vector<ScenarioNLIExample> generate_dataset(const GeneratorConfig& cfg) {
  if (cfg.grid_size < 1) throw std::invalid_argument("generate_dataset: grid_size must be >= 1");
  if (cfg.ambiguous_fraction < 0.0 || cfg.ambiguous_fraction > 1.0) {
    throw std::invalid_argument("generate_dataset: ambiguous_fraction must be in [0, 1]");
  }
  const double target_sum =
      cfg.class_targets[0] + cfg.class_targets[1] + cfg.class_targets[2];
  if (std::abs(target_sum - 1.0) > 1e-9) {
    throw std::invalid_argument("generate_dataset: class targets must sum to 1");
  }
  std::vector<ScenarioNLIExample> out;
  out.reserve(cfg.train_count + cfg.dev_count + cfg.test_count);
  std::unordered_set<std::string> used;
  generate_split(cfg, {"train", cfg.train_count}, used, out);
  generate_split(cfg, {"dev", cfg.dev_count}, used, out);
  generate_split(cfg, {"test", cfg.test_count}, used, out);
  return out;
}

Vocabulary dataset_vocabulary() {
  Vocabulary v = Vocabulary::with_reserved();
  for (const auto* pool : {&kAgents, &kActions, &kObjects, &kLocations, &kNegation,
                           &kAdverbs, &kMisc}) {
    for (const std::string& token : *pool) v.add(token);
  }
  return v;
}

bool is_ambiguous_hypothesis(const std::vector<std::string>& hypothesis) {
  return contains(hypothesis, "outside") || contains(hypothesis, "inside");
}

int derive_label(const std::vector<std::string>& premise,
                 const std::vector<std::string>& hypothesis, const ScenarioGrid& grid) {
  (void)premise;  // the rule table keys on the hypothesis form
  if (contains(hypothesis, "outside") || contains(hypothesis, "inside")) {
    const int marker = grid.cells[GridSemantics::location_cell].object_class;
    const int asserted = contains(hypothesis, "outside")
                             ? GridSemantics::outdoor_marker
                             : GridSemantics::indoor_marker;
    return marker == asserted ? kEntailment : kContradiction;
  }
  if (contains(hypothesis, "not")) return kContradiction;
  if (contains(hypothesis, "with")) return kNeutral;
  for (const std::string& adverb : kAdverbs) {
    if (contains(hypothesis, adverb)) return kNeutral;
  }
  return kEntailment;
}

double text_only_bayes_accuracy(std::span<const ScenarioNLIExample> dataset) {
  if (dataset.empty()) return 0.0;
  std::unordered_map<std::string, std::array<std::size_t, 3>> counts;
  for (const ScenarioNLIExample& ex : dataset) {
    const std::string key = join_tokens(ex.premise) + "\x1f" + join_tokens(ex.hypothesis);
    counts[key][static_cast<std::size_t>(ex.label)] += 1;
  }
  std::size_t best_total = 0;
  for (const auto& [key, c] : counts) {
    best_total += std::max({c[0], c[1], c[2]});
  }
  return static_cast<double>(best_total) / static_cast<double>(dataset.size());
}

void write_dataset(const std::string& path, std::span<const ScenarioNLIExample> dataset) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("dataset: cannot open for write: " + path);
  for (const ScenarioNLIExample& ex : dataset) {
    nlohmann::json cells = nlohmann::json::array();
    for (const GridCell& c : ex.grid.cells) {
      cells.push_back({c.object_class, c.color, c.present});
    }
    nlohmann::json record = {
        {"premise", join_tokens(ex.premise)},
        {"hypothesis", join_tokens(ex.hypothesis)},
        {"grid", {{"G", ex.grid.size}, {"cells", cells}}},
        {"label", ex.label},
        {"ambiguous", ex.ambiguous},
        {"split", ex.split},
    };
    os << record.dump() << "\n";
  }
  if (!os) throw std::runtime_error("dataset: write failed: " + path);
}

std::vector<ScenarioNLIExample> read_dataset(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("dataset: cannot open: " + path);
  std::vector<ScenarioNLIExample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const nlohmann::json record = nlohmann::json::parse(line);
      ScenarioNLIExample ex;
      ex.premise = split_tokens(record.at("premise").get<std::string>());
      ex.hypothesis = split_tokens(record.at("hypothesis").get<std::string>());
      const nlohmann::json& grid = record.at("grid");
      ex.grid.size = grid.at("G").get<std::size_t>();
      for (const auto& cell : grid.at("cells")) {
        ex.grid.cells.push_back(GridCell{cell.at(0).get<int>(), cell.at(1).get<int>(),
                                         cell.at(2).get<int>()});
      }
      if (ex.grid.cells.size() != ex.grid.size * ex.grid.size) {
        throw std::runtime_error("grid cell count does not match G");
      }
      ex.label = record.at("label").get<int>();
      ex.ambiguous = record.at("ambiguous").get<bool>();
      ex.split = record.at("split").get<std::string>();
      out.push_back(std::move(ex));
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("dataset: line " + std::to_string(line_no) + ": " + e.what());
    } catch (const std::runtime_error& e) {
      throw std::runtime_error("dataset: line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<std::string> split_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string token;
  while (is >> token) out.push_back(token);
  return out;
}

std::string join_tokens(std::span<const std::string> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

}  // namespace scenafuse
