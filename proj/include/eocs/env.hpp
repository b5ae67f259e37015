#pragma once

// Markov decision process for extreme-operating-condition search: one line
// trip per step, reward is the change in tail-end fault current.

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "eocs/adjacency.hpp"
#include "eocs/fault.hpp"
#include "eocs/grid.hpp"

namespace eocs {

struct EnvConfig {
  int k_max = 3;
  /// Sentinel for disconnected entries; <= 0 selects sentinel_cap(case).
  double feature_cap = 0.0;
  bool normalize = true;
  /// Appends a per-node column holding the remaining trip budget / k_max.
  bool budget_feature = false;
};

inline int feature_width(int n, const EnvConfig& config) { return 3 * n + 1 + (config.budget_feature ? 1 : 0); }

/// Network input for one (topology, relay) state.
struct Observation {
  /// n x (3n+1): [A + I | |Z| | D | relay flag], plus an optional budget column.
  Matrix features;
  /// Symmetrically normalized self-loop adjacency used by graph convolutions.
  Matrix adjacency;
  /// Per line: 1 if choosing it is a legal action to score (in service; the
  /// protected line is the canonical stop action).
  std::vector<std::uint8_t> valid;
};

using ObservationPtr = std::shared_ptr<const Observation>;

struct Transition {
  ObservationPtr s;
  LineId a = 0;
  double r = 0.0;
  ObservationPtr s_next;
  bool d = false;
  bool guided = false;
};

struct EpisodeState {
  const GridCase* grid = nullptr;
  TopologyState status;
  RelayPoint relay;
  int trips_done = 0;
  double current = 0.0;
  bool done = false;
  ObservationPtr observation;
};

inline Observation encode(const GridCase& c, const TopologyState& state, const RelayPoint& relay,
                          const EnvConfig& config, int trips_done = 0) {
  const int n = c.bus_count();
  const double cap = config.feature_cap > 0.0 ? config.feature_cap : sentinel_cap(c);
  const Matrix adj = line_adjacency(c, state);
  Matrix self_loop = adj + Matrix::Identity(n, n);
  Matrix z = impedance_matrix(c, state, cap).cwiseAbs();
  Matrix d = electrical_distances(c, state, cap);

  if (config.normalize) {
    auto scale = [](Matrix& block) {
      const double mx = block.maxCoeff();
      if (mx > 0.0)
        block /= mx;
      else
        block.setZero();
    };
    scale(self_loop);
    scale(z);
    scale(d);
  }

  Observation obs;
  obs.features.resize(n, feature_width(n, config));
  obs.features.leftCols(n) = self_loop;
  obs.features.middleCols(n, n) = z;
  obs.features.middleCols(2 * n, n) = d;
  obs.features.col(3 * n).setZero();
  obs.features(c.relay_bus(relay), 3 * n) = 1.0;
  obs.features(c.fault_bus(relay), 3 * n) = -1.0;
  if (config.budget_feature)
    obs.features.col(3 * n + 1).setConstant(static_cast<double>(config.k_max - trips_done) / config.k_max);
  obs.adjacency = normalize_adjacency(adj);
  obs.valid.assign(static_cast<std::size_t>(c.line_count()), 0);
  for (LineId l = 0; l < c.line_count(); ++l) obs.valid[l] = state.in_service(l) ? 1 : 0;
  return obs;
}

inline EpisodeState reset(const GridCase& c, const TopologyState& initial_status, const RelayPoint& relay,
                          const EnvConfig& config) {
  if (config.k_max < 1) throw std::invalid_argument("EnvConfig.k_max must be >= 1");
  if (initial_status.size() != c.line_count())
    throw std::invalid_argument("initial status has " + std::to_string(initial_status.size()) + " entries, case has " +
                                std::to_string(c.line_count()) + " lines");
  if (!initial_status.in_service(relay.line_id))
    throw std::invalid_argument("protected line " + std::to_string(relay.line_id) + " is out of service");
  EpisodeState env;
  env.grid = &c;
  env.status = initial_status;
  env.relay = relay;
  env.current = tail_fault_current(c, initial_status, relay);
  env.observation = std::make_shared<const Observation>(encode(c, initial_status, relay, config));
  return env;
}

/// A trip of the protected line or of an out-of-service line stops the episode.
inline bool is_stop_action(const EpisodeState& env, LineId action) {
  return action == env.relay.line_id || !env.status.in_service(action);
}

struct StepResult {
  Transition transition;
  EpisodeState next;
};

inline StepResult step(const EpisodeState& env, LineId action, const EnvConfig& config) {
  if (env.done) throw std::logic_error("step: episode already finished");
  if (action < 0 || action >= env.grid->line_count())
    throw std::invalid_argument("step: action " + std::to_string(action) + " out of range");
  StepResult out{{}, env};
  auto& t = out.transition;
  t.s = env.observation;
  t.a = action;
  if (is_stop_action(env, action)) {
    t.r = 0.0;
    t.d = true;
    t.s_next = env.observation;
    out.next.done = true;
    return out;
  }
  auto& next = out.next;
  next.status = apply_trip(env.status, action);
  next.current = tail_fault_current(*env.grid, next.status, env.relay);
  next.trips_done = env.trips_done + 1;
  next.done = next.trips_done >= config.k_max;
  next.observation = std::make_shared<const Observation>(encode(*env.grid, next.status, env.relay, config, next.trips_done));
  t.r = next.current - env.current;
  t.d = next.done;
  t.s_next = next.observation;
  return out;
}

}  // namespace eocs
