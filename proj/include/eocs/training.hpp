#pragma once

// Two-stage training: supervised guide pretraining on enumerated labels, then
// value-network training that mixes guide-driven episodes with extended
// exploration, drawing batches from a FIFO replay buffer.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "eocs/env.hpp"
#include "eocs/nn.hpp"
#include "eocs/oracles.hpp"
#include "eocs/policy.hpp"

namespace eocs {

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be > 0");
  }

  void push(Transition t) {
    if (items_.size() == capacity_) items_.pop_front();
    items_.push_back(std::move(t));
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& operator[](std::size_t i) const { return items_[i]; }

  /// Uniform sample without replacement.
  std::vector<Transition> sample(std::size_t batch, std::mt19937_64& rng) const {
    if (batch > items_.size())
      throw std::invalid_argument("ReplayBuffer::sample: requested " + std::to_string(batch) + " of " +
                                  std::to_string(items_.size()) + " stored transitions");
    std::vector<std::size_t> idx(items_.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::vector<Transition> out;
    out.reserve(batch);
    for (std::size_t i = 0; i < batch; ++i) {
      const auto j = std::uniform_int_distribution<std::size_t>(i, idx.size() - 1)(rng);
      std::swap(idx[i], idx[j]);
      out.push_back(items_[idx[i]]);
    }
    return out;
  }

 private:
  std::size_t capacity_;
  std::deque<Transition> items_;
};

struct GuideTrainConfig {
  int batch = 128;
  int train_size = 12000;
  int verify_size = 1500;
  int test_size = 3000;
  double learning_rate = 1e-3;
  int epochs = 2000;
  nn::Architecture arch{{64, 64}, {256}};
};

struct ValueTrainConfig {
  int batch = 64;
  double alpha = 0.9;
  double epsilon = 0.15;
  int explore_n = 3;
  double learning_rate = 1e-3;
  int memory = 10000;
  double lr_decay = 1.0 / std::sqrt(10.0);
  int lr_step = 5;
  double initial_percentage = 0.9;
  double percentage_step = 0.03;
  int episodes_per_round = 100;
  int rounds = 100;
  int updates_per_episode = 1;
  /// Held-out Scenario-1 states scored after every round (0 disables).
  int snapshot_samples = 0;
  /// Return the snapshot-best weights instead of the last round's.
  bool keep_best = false;
  nn::Architecture arch{{64, 64}, {256, 128}};
};

struct Ablation {
  bool no_guide = false;
  bool no_dueling = false;
  bool no_double = false;
};

struct TrainConfig {
  GuideTrainConfig guide;
  ValueTrainConfig value;
  int k_max = 3;
  int initial_outages = 3;
  std::uint64_t seed = 1;
  Ablation ablation;
  EnvConfig env;

  /// Every violated constraint, one message each.
  std::vector<std::string> validate() const {
    std::vector<std::string> errs;
    auto need = [&errs](bool ok, const std::string& msg) {
      if (!ok) errs.push_back(msg);
    };
    need(guide.batch >= 1, "Guided Net.Batch must be >= 1");
    need(guide.train_size >= 1, "Guided Net.Training set must be >= 1");
    need(guide.verify_size >= 0, "Guided Net.Verify set must be >= 0");
    need(guide.test_size >= 0, "Guided Net.Test set must be >= 0");
    need(guide.learning_rate > 0, "Guided Net.Learning rate must be > 0");
    need(guide.epochs >= 1, "Guided Net.Train Epochs must be >= 1");
    need(value.batch >= 1, "Value Net.Batch must be >= 1");
    need(value.alpha > 0 && value.alpha <= 1, "Value Net.alpha must lie in (0,1]");
    need(value.epsilon >= 0 && value.epsilon <= 1, "Value Net.epsilon must lie in [0,1]");
    need(value.explore_n >= 1, "Value Net.Action num must be >= 1");
    need(value.learning_rate > 0, "Value Net.Learning rate must be > 0");
    need(value.memory >= value.batch, "Value Net.Memory must be >= Value Net.Batch");
    need(value.lr_decay > 0, "Value Net.gamma must be > 0");
    need(value.lr_step >= 1, "Value Net.Step size must be >= 1");
    need(value.initial_percentage >= 0 && value.initial_percentage <= 1,
         "Guided Net.Initial percentage must lie in [0,1]");
    need(value.percentage_step >= 0 && value.percentage_step <= 1, "Guided Net.Percentage step must lie in [0,1]");
    need(value.episodes_per_round >= 1, "Run.episodes_per_round must be >= 1");
    need(value.rounds >= 1, "Run.rounds must be >= 1");
    need(value.updates_per_episode >= 1, "Run.updates_per_episode must be >= 1");
    need(value.snapshot_samples >= 0, "Run.snapshot_samples must be >= 0");
    need(!value.keep_best || value.snapshot_samples > 0, "Run.keep_best requires Run.snapshot_samples > 0");
    need(k_max >= 1, "Run.k must be >= 1");
    need(initial_outages >= 0, "Run.initial_outages must be >= 0");
    return errs;
  }
};

/// Guided fraction used in round `round` (0-based), clamped at 0.
inline double guided_percentage(const ValueTrainConfig& v, int round) {
  return std::max(0.0, v.initial_percentage - v.percentage_step * round);
}

// ---------------------------------------------------------------------------
// Guide network

struct GuideEpochRow {
  int epoch = 0;
  double loss = 0.0;
  double verify_accuracy = 0.0;
};

struct GuideTrainResult {
  nn::QNetworkParams params;
  double test_accuracy = 0.0;
  std::size_t evaluated_samples = 0;
  std::vector<GuideEpochRow> epochs;
};

namespace detail {

inline nn::Vector out_labels(const DatasetSample& s) {
  nn::Vector y(static_cast<Eigen::Index>(s.eoc_out.size()));
  for (std::size_t i = 0; i < s.eoc_out.size(); ++i) y(static_cast<Eigen::Index>(i)) = s.eoc_out[i];
  return y;
}

}  // namespace detail

/// Exact-match rate of guide predictions: initial outages plus select_eoc trips
/// must equal the enumerated EOC as a whole.
inline double guide_accuracy(const nn::QNetworkParams& guide, const GridCase& c, std::span<const DatasetSample> samples,
                             int k, const EnvConfig& env_config = {}) {
  if (samples.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& s : samples) {
    const auto obs = encode(c, s.status, s.relay, env_config);
    const auto out = nn::guide_forward(obs, guide);
    auto predicted = s.status;
    for (LineId l : nn::select_eoc(out, k, s.relay.line_id, s.status)) predicted.set(l, false);
    bool match = true;
    for (LineId l = 0; l < c.line_count() && match; ++l)
      match = (predicted.in_service(l) ? 0 : 1) == s.eoc_out[static_cast<std::size_t>(l)];
    correct += match ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

inline std::string guide_report_csv(const GuideTrainResult& r) {
  std::string out = "epoch,loss,verify_accuracy\n";
  char buf[96];
  for (const auto& row : r.epochs) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.6f\n", row.epoch, row.loss, row.verify_accuracy);
    out += buf;
  }
  return out;
}

/// Supervised BCE training of the sigmoid guide network. The dataset is split
/// in order into train / verify / test; with no test split the reported
/// accuracy is measured on the training split.
inline GuideTrainResult pretrain_guide(const GridCase& c, const std::vector<DatasetSample>& dataset,
                                       const TrainConfig& config) {
  if (dataset.empty()) throw std::invalid_argument("pretrain_guide: empty dataset");
  const auto& g = config.guide;
  const std::size_t total = dataset.size();
  const std::size_t n_train = std::min<std::size_t>(static_cast<std::size_t>(g.train_size), total);
  const std::size_t n_verify = std::min<std::size_t>(static_cast<std::size_t>(g.verify_size), total - n_train);
  const std::size_t n_test = std::min<std::size_t>(static_cast<std::size_t>(g.test_size), total - n_train - n_verify);
  std::span<const DatasetSample> all(dataset);
  auto train = all.subspan(0, n_train);
  auto verify = all.subspan(n_train, n_verify);
  auto test = all.subspan(n_train + n_verify, n_test);

  std::mt19937_64 rng(config.seed);
  GuideTrainResult result;
  result.params = nn::make_network(c.bus_count(), c.line_count(), nn::HeadKind::guide_sigmoid, g.arch, rng, c.name(),
                                   feature_width(c.bus_count(), config.env));
  nn::OptimizerState opt(result.params, g.learning_rate);

  std::vector<Observation> obs;
  obs.reserve(n_train);
  std::vector<nn::Vector> labels;
  for (const auto& s : train) {
    obs.push_back(encode(c, s.status, s.relay, config.env));
    labels.push_back(detail::out_labels(s));
  }
  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<nn::TrainSample> batch;
  for (int epoch = 0; epoch < g.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    int steps = 0;
    for (std::size_t b = 0; b < n_train; b += static_cast<std::size_t>(g.batch)) {
      batch.clear();
      for (std::size_t i = b; i < std::min(n_train, b + static_cast<std::size_t>(g.batch)); ++i)
        batch.push_back({&obs[order[i]], labels[order[i]], -1});
      loss_sum += nn::train_step(result.params, opt, batch, nn::LossKind::bce);
      ++steps;
    }
    GuideEpochRow row;
    row.epoch = epoch;
    row.loss = loss_sum / std::max(steps, 1);
    row.verify_accuracy = verify.empty() ? 0.0 : guide_accuracy(result.params, c, verify, config.k_max, config.env);
    result.epochs.push_back(row);
  }
  auto scored = test.empty() ? train : test;
  result.test_accuracy = guide_accuracy(result.params, c, scored, config.k_max, config.env);
  result.evaluated_samples = scored.size();
  return result;
}

// ---------------------------------------------------------------------------
// Episode generation

/// Executes the guide's predicted trip set in order; only the last recorded
/// transition is terminal.
inline std::vector<Transition> guided_episode(const EpisodeState& start, const nn::QNetworkParams& guide_params,
                                              const EnvConfig& env_config) {
  const auto outputs = nn::guide_forward(*start.observation, guide_params);
  const auto actions = nn::select_eoc(outputs, env_config.k_max, start.relay.line_id, start.status);
  std::vector<Transition> out;
  EpisodeState env = start;
  for (std::size_t i = 0; i < actions.size() && !env.done; ++i) {
    auto res = step(env, actions[i], env_config);
    res.transition.d = (i + 1 == actions.size());
    res.transition.guided = true;
    out.push_back(std::move(res.transition));
    env = std::move(res.next);
  }
  return out;
}

namespace detail {

inline void explore_from(const EpisodeState& env, const nn::QNetworkParams& value_params, int n, double epsilon,
                         std::mt19937_64& rng, const EnvConfig& env_config, std::vector<Transition>& out) {
  const auto q = nn::value_forward(*env.observation, value_params);
  std::vector<LineId> valid;
  for (LineId a = 0; a < static_cast<LineId>(env.observation->valid.size()); ++a)
    if (env.observation->valid[static_cast<std::size_t>(a)]) valid.push_back(a);
  std::vector<LineId> ranked = valid;
  std::stable_sort(ranked.begin(), ranked.end(), [&](LineId a, LineId b) { return q(a) > q(b); });
  const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(n), ranked.size());
  std::vector<LineId> actions(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(take));

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t slot = 0; slot < actions.size(); ++slot) {
    if (!(unit(rng) < epsilon)) continue;
    std::vector<LineId> unused;
    for (LineId a : valid)
      if (std::find(actions.begin(), actions.end(), a) == actions.end()) unused.push_back(a);
    if (unused.empty()) break;
    actions[slot] = unused[std::uniform_int_distribution<std::size_t>(0, unused.size() - 1)(rng)];
  }

  for (LineId a : actions) {
    auto res = step(env, a, env_config);
    const bool terminal = res.transition.d;
    out.push_back(std::move(res.transition));
    if (!terminal) {
      --n;
      if (n > 0) explore_from(res.next, value_params, n, epsilon, rng, env_config, out);
    }
  }
}

}  // namespace detail

/// Tries the top-n actions under one state, each in its own copy of the
/// environment; every non-terminal outcome consumes one unit of n and the
/// strategy recurses under it with the remaining budget.
inline std::vector<Transition> extended_explore(const EpisodeState& env, const nn::QNetworkParams& value_params, int n,
                                                double epsilon, std::mt19937_64& rng, const EnvConfig& env_config) {
  if (env.done) throw std::logic_error("extended_explore: episode already finished");
  if (n < 1) throw std::invalid_argument("extended_explore: n must be >= 1");
  std::vector<Transition> out;
  detail::explore_from(env, value_params, n, epsilon, rng, env_config, out);
  return out;
}

// ---------------------------------------------------------------------------
// Value network

struct RoundRow {
  int round = 0;
  double guided_fraction = 0.0;
  double loss = 0.0;
  double accuracy = -1.0;  // -1 when no snapshot set is configured
  double learning_rate = 0.0;
  std::size_t buffer_size = 0;
  long transitions = 0;
};

struct TrainReport {
  std::vector<RoundRow> rounds;
  double wall_time_s = 0.0;
  long total_transitions = 0;
  /// Round whose weights were returned under keep_best, else -1.
  int best_round = -1;
};

inline std::string report_csv(const TrainReport& r) {
  std::string out = "round,guided_fraction,loss,accuracy,lr,buffer_size,transitions\n";
  char buf[256];
  for (const auto& row : r.rounds) {
    std::snprintf(buf, sizeof buf, "%d,%.6f,%.17g,%.6f,%.17g,%zu,%ld\n", row.round, row.guided_fraction, row.loss,
                  row.accuracy, row.learning_rate, row.buffer_size, row.transitions);
    out += buf;
  }
  return out;
}

/// Held-out (state, relay, oracle current) triples for accuracy snapshots.
struct SnapshotSet {
  std::vector<InitialCondition> states;
  std::vector<double> oracle;
};

inline SnapshotSet make_snapshot_set(const GridCase& c, int samples, int outage_limit, int k, std::uint64_t seed) {
  SnapshotSet s;
  std::mt19937_64 rng(seed);
  for (int i = 0; i < samples; ++i) {
    auto ic = sample_initial_condition(c, outage_limit, rng);
    s.oracle.push_back(global_enumerate(c, ic.status, ic.relay, k).i_max);
    s.states.push_back(std::move(ic));
  }
  return s;
}

inline double snapshot_accuracy(const nn::QNetworkParams& value_params, const GridCase& c, const SnapshotSet& set,
                                int k, const EnvConfig& env_config, double rel_tol = 1e-9) {
  if (set.states.empty()) return -1.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < set.states.size(); ++i) {
    const auto r = infer_eoc(value_params, c, set.states[i].status, set.states[i].relay, k, env_config);
    correct += currents_equal(r.i_max, set.oracle[i], rel_tol) ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(set.states.size());
}

struct ValueTrainResult {
  nn::QNetworkParams params;
  TrainReport report;
};

using RoundCallback = std::function<void(const RoundRow&, const nn::QNetworkParams&)>;

/// Builds one batch of (observation, action, blended double-DQN target) samples.
inline std::vector<nn::TrainSample> value_targets(const std::vector<Transition>& batch,
                                                  const nn::QNetworkParams& pred, const nn::QNetworkParams& target,
                                                  double alpha, double gamma) {
  std::vector<nn::TrainSample> out;
  out.reserve(batch.size());
  for (const auto& t : batch) {
    const double q_sa = nn::value_forward(*t.s, pred)(t.a);
    double y;
    if (t.d) {
      y = nn::d3qn_target(q_sa, t.r, true, {}, {}, {}, alpha, gamma);
    } else {
      const auto q_pred_next = nn::value_forward(*t.s_next, pred);
      const auto q_tgt_next = &target == &pred ? q_pred_next : nn::value_forward(*t.s_next, target);
      y = nn::d3qn_target(q_sa, t.r, false, q_pred_next, q_tgt_next, t.s_next->valid, alpha, gamma);
    }
    nn::TrainSample s;
    s.obs = t.s.get();
    s.target = nn::Vector::Constant(1, y);
    s.action = t.a;
    out.push_back(std::move(s));
  }
  return out;
}

/// GLFE loop: rounds x episodes; each episode is guided with the current
/// guided fraction, otherwise explored; one gradient step per episode once the
/// buffer holds a batch; target sync, guided-fraction decay and learning-rate
/// decay at round boundaries.
inline ValueTrainResult train_value(const GridCase& c, const nn::QNetworkParams* guide_params,
                                    const TrainConfig& config, const RoundCallback& on_round = {}) {
  const auto errs = config.validate();
  if (!errs.empty()) throw std::invalid_argument("train_value: invalid config: " + errs.front());
  const bool use_guide = !config.ablation.no_guide;
  if (use_guide && guide_params == nullptr)
    throw std::invalid_argument("train_value: a pretrained guide network is required");
  const auto& v = config.value;
  const auto start_time = std::chrono::steady_clock::now();
  constexpr double kGamma = 1.0;

  EnvConfig env_config = config.env;
  env_config.k_max = config.k_max;

  std::mt19937_64 rng(config.seed);
  const auto head = config.ablation.no_dueling ? nn::HeadKind::plain : nn::HeadKind::dueling;
  ValueTrainResult result;
  result.params = nn::make_network(c.bus_count(), c.line_count(), head, v.arch, rng, c.name(),
                                   feature_width(c.bus_count(), env_config));
  nn::QNetworkParams target = result.params;
  nn::OptimizerState opt(result.params, v.learning_rate);
  ReplayBuffer buffer(static_cast<std::size_t>(v.memory));

  const SnapshotSet snapshot =
      make_snapshot_set(c, v.snapshot_samples, config.initial_outages, config.k_max, config.seed ^ 0x5eed5eedULL);

  std::optional<nn::QNetworkParams> best;
  double best_accuracy = -1.0;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int round = 0; round < v.rounds; ++round) {
    const double guided_pct = use_guide ? guided_percentage(v, round) : 0.0;
    double loss_sum = 0.0;
    int loss_steps = 0;
    long transitions = 0;
    for (int ep = 0; ep < v.episodes_per_round; ++ep) {
      const auto ic = sample_initial_condition(c, config.initial_outages, rng);
      const EpisodeState env = reset(c, ic.status, ic.relay, env_config);
      std::vector<Transition> produced;
      if (use_guide && unit(rng) < guided_pct)
        produced = guided_episode(env, *guide_params, env_config);
      else
        produced = extended_explore(env, result.params, v.explore_n, v.epsilon, rng, env_config);
      transitions += static_cast<long>(produced.size());
      for (auto& t : produced) buffer.push(std::move(t));

      if (buffer.size() < static_cast<std::size_t>(v.batch)) continue;
      for (int u = 0; u < v.updates_per_episode; ++u) {
        const auto batch = buffer.sample(static_cast<std::size_t>(v.batch), rng);
        const auto& tgt_net = config.ablation.no_double ? result.params : target;
        const auto samples = value_targets(batch, result.params, tgt_net, v.alpha, kGamma);
        loss_sum += nn::train_step(result.params, opt, samples, nn::LossKind::mse);
        ++loss_steps;
      }
    }

    RoundRow row;
    row.round = round;
    row.guided_fraction = guided_pct;
    row.loss = loss_steps > 0 ? loss_sum / loss_steps : 0.0;
    row.learning_rate = opt.learning_rate;
    row.buffer_size = buffer.size();
    row.transitions = transitions;
    row.accuracy = snapshot_accuracy(result.params, c, snapshot, config.k_max, env_config);
    result.report.rounds.push_back(row);
    result.report.total_transitions += transitions;
    if (v.keep_best && row.accuracy > best_accuracy) {
      best_accuracy = row.accuracy;
      best = result.params;
      result.report.best_round = round;
    }

    target = result.params;
    if ((round + 1) % v.lr_step == 0) opt.learning_rate *= v.lr_decay;
    if (on_round) on_round(row, result.params);
  }
  if (best) result.params = std::move(*best);
  result.report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
  return result;
}

}  // namespace eocs
