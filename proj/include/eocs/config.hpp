#pragma once

// JSON run configuration. The "Guided Net" and "Value Net" sections use the
// hyperparameter table's row names verbatim and every such key is required;
// "Run" holds the remaining knobs, all optional.

#include <algorithm>
#include <set>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "eocs/training.hpp"

namespace eocs {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> problems)
      : std::runtime_error(join(problems)), problems_(std::move(problems)) {}
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  static std::string join(const std::vector<std::string>& p) {
    std::string out = "invalid config (" + std::to_string(p.size()) + " problem" + (p.size() == 1 ? "" : "s") + ")";
    for (const auto& s : p) out += "\n  - " + s;
    return out;
  }
  std::vector<std::string> problems_;
};

struct RunConfig {
  TrainConfig train;
  int n1 = 1000;
  int n2 = 20;
  /// Write a value-network checkpoint every this many rounds (0 disables).
  int checkpoint_every = 0;
};

inline const std::vector<std::string>& guided_net_keys() {
  static const std::vector<std::string> keys{"Batch",        "Training set",       "Verify set",     "Test set",
                                             "Learning rate", "Train Epochs",      "Initial percentage",
                                             "Percentage step"};
  return keys;
}

inline const std::vector<std::string>& value_net_keys() {
  static const std::vector<std::string> keys{"Batch", "alpha",         "epsilon", "Action num", "N1",
                                             "N2",    "Learning rate", "Memory",  "gamma",      "Step size"};
  return keys;
}

inline const std::vector<std::string>& run_keys() {
  static const std::vector<std::string> keys{
      "k",          "initial_outages",    "seed",           "episodes_per_round", "rounds",
      "updates_per_episode", "snapshot_samples", "keep_best", "checkpoint_every", "budget_feature",
      "guide_graph_widths",  "guide_dense_widths", "value_graph_widths", "value_dense_widths"};
  return keys;
}

namespace detail {

class ConfigReader {
 public:
  std::vector<std::string> problems;

  const nlohmann::json* section(const nlohmann::json& root, const std::string& name, bool required) {
    if (!root.contains(name)) {
      if (required) problems.push_back("missing section \"" + name + "\"");
      return nullptr;
    }
    const auto& s = root.at(name);
    if (!s.is_object()) {
      problems.push_back("section \"" + name + "\" must be an object");
      return nullptr;
    }
    return &s;
  }

  void unknown_keys(const nlohmann::json* s, const std::string& name, const std::vector<std::string>& allowed) {
    if (s == nullptr) return;
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (auto it = s->begin(); it != s->end(); ++it)
      if (!ok.count(it.key())) problems.push_back(name + ": unknown key \"" + it.key() + "\"");
  }

  template <class T>
  void read(const nlohmann::json* s, const std::string& sec, const std::string& key, T& out, bool required) {
    if (s == nullptr) return;
    if (!s->contains(key)) {
      if (required) problems.push_back(sec + "." + key + " is required");
      return;
    }
    const auto& v = s->at(key);
    bool ok = false;
    if constexpr (std::is_same_v<T, bool>) {
      ok = v.is_boolean();
    } else if constexpr (std::is_integral_v<T>) {
      ok = v.is_number_integer();
    } else if constexpr (std::is_floating_point_v<T>) {
      ok = v.is_number();
    } else {
      ok = v.is_array() && std::all_of(v.begin(), v.end(), [](const auto& e) { return e.is_number_integer() && e.template get<int>() >= 1; });
    }
    if (!ok) {
      problems.push_back(sec + "." + key + " has the wrong type");
      return;
    }
    out = v.get<T>();
  }
};

}  // namespace detail

/// Parses and validates; throws ConfigError listing every problem found.
inline RunConfig parse_config(std::string_view text) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError({std::string("malformed JSON: ") + e.what()});
  }
  if (!root.is_object()) throw ConfigError({"config root must be an object"});

  detail::ConfigReader rd;
  RunConfig cfg;
  auto& t = cfg.train;
  auto& g = t.guide;
  auto& v = t.value;
  const auto* gs = rd.section(root, "Guided Net", true);
  const auto* vs = rd.section(root, "Value Net", true);
  const auto* rs = rd.section(root, "Run", false);
  for (auto it = root.begin(); it != root.end(); ++it)
    if (it.key() != "Guided Net" && it.key() != "Value Net" && it.key() != "Run")
      rd.problems.push_back("unknown section \"" + it.key() + "\"");
  rd.unknown_keys(gs, "Guided Net", guided_net_keys());
  rd.unknown_keys(vs, "Value Net", value_net_keys());
  rd.unknown_keys(rs, "Run", run_keys());

  rd.read(gs, "Guided Net", "Batch", g.batch, true);
  rd.read(gs, "Guided Net", "Training set", g.train_size, true);
  rd.read(gs, "Guided Net", "Verify set", g.verify_size, true);
  rd.read(gs, "Guided Net", "Test set", g.test_size, true);
  rd.read(gs, "Guided Net", "Learning rate", g.learning_rate, true);
  rd.read(gs, "Guided Net", "Train Epochs", g.epochs, true);
  rd.read(gs, "Guided Net", "Initial percentage", v.initial_percentage, true);
  rd.read(gs, "Guided Net", "Percentage step", v.percentage_step, true);

  rd.read(vs, "Value Net", "Batch", v.batch, true);
  rd.read(vs, "Value Net", "alpha", v.alpha, true);
  rd.read(vs, "Value Net", "epsilon", v.epsilon, true);
  rd.read(vs, "Value Net", "Action num", v.explore_n, true);
  rd.read(vs, "Value Net", "N1", cfg.n1, true);
  rd.read(vs, "Value Net", "N2", cfg.n2, true);
  rd.read(vs, "Value Net", "Learning rate", v.learning_rate, true);
  rd.read(vs, "Value Net", "Memory", v.memory, true);
  rd.read(vs, "Value Net", "gamma", v.lr_decay, true);
  rd.read(vs, "Value Net", "Step size", v.lr_step, true);

  rd.read(rs, "Run", "k", t.k_max, false);
  rd.read(rs, "Run", "initial_outages", t.initial_outages, false);
  rd.read(rs, "Run", "seed", t.seed, false);
  rd.read(rs, "Run", "episodes_per_round", v.episodes_per_round, false);
  rd.read(rs, "Run", "rounds", v.rounds, false);
  rd.read(rs, "Run", "updates_per_episode", v.updates_per_episode, false);
  rd.read(rs, "Run", "snapshot_samples", v.snapshot_samples, false);
  rd.read(rs, "Run", "keep_best", v.keep_best, false);
  rd.read(rs, "Run", "checkpoint_every", cfg.checkpoint_every, false);
  rd.read(rs, "Run", "budget_feature", t.env.budget_feature, false);
  rd.read(rs, "Run", "guide_graph_widths", g.arch.graph_widths, false);
  rd.read(rs, "Run", "guide_dense_widths", g.arch.dense_widths, false);
  rd.read(rs, "Run", "value_graph_widths", v.arch.graph_widths, false);
  rd.read(rs, "Run", "value_dense_widths", v.arch.dense_widths, false);

  if (rd.problems.empty()) {
    for (auto& e : t.validate()) rd.problems.push_back(std::move(e));
    if (cfg.n1 < 1) rd.problems.push_back("Value Net.N1 must be >= 1");
    if (cfg.n2 < 1) rd.problems.push_back("Value Net.N2 must be >= 1");
    if (cfg.checkpoint_every < 0) rd.problems.push_back("Run.checkpoint_every must be >= 0");
  }
  if (!rd.problems.empty()) throw ConfigError(std::move(rd.problems));
  t.env.k_max = t.k_max;
  return cfg;
}

inline nlohmann::ordered_json config_to_json(const RunConfig& cfg) {
  const auto& t = cfg.train;
  const auto& g = t.guide;
  const auto& v = t.value;
  nlohmann::ordered_json j;
  j["Guided Net"] = {{"Batch", g.batch},
                     {"Training set", g.train_size},
                     {"Verify set", g.verify_size},
                     {"Test set", g.test_size},
                     {"Learning rate", g.learning_rate},
                     {"Train Epochs", g.epochs},
                     {"Initial percentage", v.initial_percentage},
                     {"Percentage step", v.percentage_step}};
  j["Value Net"] = {{"Batch", v.batch},
                    {"alpha", v.alpha},
                    {"epsilon", v.epsilon},
                    {"Action num", v.explore_n},
                    {"N1", cfg.n1},
                    {"N2", cfg.n2},
                    {"Learning rate", v.learning_rate},
                    {"Memory", v.memory},
                    {"gamma", v.lr_decay},
                    {"Step size", v.lr_step}};
  j["Run"] = {{"k", t.k_max},
              {"initial_outages", t.initial_outages},
              {"seed", t.seed},
              {"episodes_per_round", v.episodes_per_round},
              {"rounds", v.rounds},
              {"updates_per_episode", v.updates_per_episode},
              {"snapshot_samples", v.snapshot_samples},
              {"keep_best", v.keep_best},
              {"checkpoint_every", cfg.checkpoint_every},
              {"budget_feature", t.env.budget_feature},
              {"guide_graph_widths", g.arch.graph_widths},
              {"guide_dense_widths", g.arch.dense_widths},
              {"value_graph_widths", v.arch.graph_widths},
              {"value_dense_widths", v.arch.dense_widths}};
  return j;
}

}  // namespace eocs
