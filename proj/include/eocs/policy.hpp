#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "eocs/env.hpp"
#include "eocs/nn.hpp"
#include "eocs/oracles.hpp"

namespace eocs {

/// Greedy value-network rollout: trip the argmax-Q line (over in-service
/// lines, ties to the lower id) until the network stops or k trips are made.
inline SearchResult infer_eoc(const nn::QNetworkParams& value_params, const GridCase& c,
                              const TopologyState& initial_status, const RelayPoint& relay, int k,
                              EnvConfig env_config = {}) {
  const auto start = std::chrono::steady_clock::now();
  SearchResult out;
  if (k < 1) {
    out.eoc_status = initial_status;
    out.i_max = tail_fault_current(c, initial_status, relay);
    out.evaluated_count = 1;
    out.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
  }
  env_config.k_max = k;
  EpisodeState env = reset(c, initial_status, relay, env_config);
  long steps = 0;
  while (!env.done) {
    const auto q = nn::value_forward(*env.observation, value_params);
    const int a = nn::argmax_valid(q, env.observation->valid);
    if (a < 0) throw std::logic_error("infer_eoc: no valid action");
    auto res = step(env, a, env_config);
    if (!is_stop_action(env, a)) out.trips.push_back(a);
    env = std::move(res.next);
    ++steps;
  }
  std::sort(out.trips.begin(), out.trips.end());
  out.eoc_status = env.status;
  out.i_max = env.current;
  out.evaluated_count = steps;
  out.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

/// Currents below this (pu) are solver round-off on a sourceless component.
inline constexpr double kCurrentAbsTol = 1e-12;

/// Equality of currents under a relative tolerance with an absolute floor.
inline bool currents_equal(double model, double oracle, double rel_tol) {
  return std::abs(model - oracle) <= std::max(rel_tol * std::abs(oracle), kCurrentAbsTol);
}

/// Model current within fraction e below the oracle.
inline bool within_fraction(double model, double oracle, double e) {
  return oracle - model <= std::max(e * std::abs(oracle), kCurrentAbsTol);
}

}  // namespace eocs
