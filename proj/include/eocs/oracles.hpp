#pragma once

// Reference searchers for the maximum tail-end fault current: global and
// local enumeration, a genetic algorithm, and labeled dataset generation.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <limits>
#include <map>
#include <ostream>
#include <queue>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "eocs/fault.hpp"
#include "eocs/grid.hpp"

namespace eocs {

struct SearchResult {
  TopologyState eoc_status;
  std::vector<LineId> trips;  // lines tripped relative to the initial status, ascending
  double i_max = 0.0;
  long evaluated_count = 0;
  double wall_time_s = 0.0;
  bool feasible = true;  // false only when the GA found no feasible individual
};

/// Currents closer than this (relative) are ties, broken by the
/// lexicographically smallest trip set.
inline constexpr double kTieTolerance = 1e-12;

inline long binomial(int n, int r) {
  if (r < 0 || r > n) return 0;
  long out = 1;
  for (int i = 1; i <= r; ++i) out = out * (n - r + i) / i;
  return out;
}

inline long enumeration_count(int candidates, int k) {
  long total = 0;
  for (int i = 0; i <= std::min(k, candidates); ++i) total += binomial(candidates, i);
  return total;
}

/// In-service lines other than the protected one, ascending.
inline std::vector<LineId> candidate_lines(const GridCase& c, const TopologyState& status, const RelayPoint& relay) {
  std::vector<LineId> out;
  for (LineId l = 0; l < c.line_count(); ++l)
    if (l != relay.line_id && status.in_service(l)) out.push_back(l);
  return out;
}

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

/// Every subset of `candidates` with at most k elements, size-major then
/// lexicographic, flattened with stride k (unused slots -1).
inline std::vector<LineId> all_trip_sets(const std::vector<LineId>& candidates, int k, long& count) {
  const int c = static_cast<int>(candidates.size());
  k = std::max(0, std::min(k, c));
  count = enumeration_count(c, k);
  const int stride = std::max(k, 1);
  std::vector<LineId> flat;
  flat.reserve(static_cast<std::size_t>(count) * static_cast<std::size_t>(stride));
  flat.insert(flat.end(), static_cast<std::size_t>(stride), -1);  // empty set
  std::vector<int> idx;
  for (int size = 1; size <= k; ++size) {
    idx.resize(static_cast<std::size_t>(size));
    for (int i = 0; i < size; ++i) idx[i] = i;
    while (true) {
      for (int i = 0; i < stride; ++i) flat.push_back(i < size ? candidates[idx[i]] : -1);
      int pos = size - 1;
      while (pos >= 0 && idx[pos] == c - size + pos) --pos;
      if (pos < 0) break;
      ++idx[pos];
      for (int i = pos + 1; i < size; ++i) idx[i] = idx[i - 1] + 1;
    }
  }
  return flat;
}

inline std::vector<LineId> unpack(std::span<const LineId> slot) {
  std::vector<LineId> out;
  for (LineId l : slot)
    if (l >= 0) out.push_back(l);
  return out;
}

inline TopologyState with_trips(TopologyState status, std::span<const LineId> trips) {
  for (LineId l : trips)
    if (l >= 0) status.set(l, false);
  return status;
}

/// Exhaustive search over subsets of `candidates`. The maximum is found first
/// and the tie-break applied in a second pass, so the result does not depend
/// on evaluation order or worker count.
inline SearchResult enumerate_subsets(const GridCase& c, const TopologyState& status, const RelayPoint& relay, int k,
                                      const std::vector<LineId>& candidates, int workers) {
  const auto start = Clock::now();
  long count = 0;
  const auto flat = all_trip_sets(candidates, k, count);
  const int stride = std::max(1, std::min(std::max(k, 0), static_cast<int>(candidates.size())));
  std::vector<double> currents(static_cast<std::size_t>(count));
  auto eval_range = [&](long begin, long end_) {
    for (long i = begin; i < end_; ++i) {
      std::span<const LineId> slot(flat.data() + i * stride, static_cast<std::size_t>(stride));
      currents[static_cast<std::size_t>(i)] = tail_fault_current(c, with_trips(status, slot), relay);
    }
  };
  workers = std::max(1, workers);
  if (workers == 1 || count < 64) {
    eval_range(0, count);
  } else {
    std::vector<std::jthread> pool;
    const long chunk = (count + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
      const long b = w * chunk, e = std::min(count, b + chunk);
      if (b < e) pool.emplace_back(eval_range, b, e);
    }
  }
  const double best = *std::max_element(currents.begin(), currents.end());
  const double floor_value = best - kTieTolerance * std::max(std::abs(best), 1e-300);
  std::vector<LineId> winner;
  bool have = false;
  for (long i = 0; i < count; ++i) {
    if (currents[static_cast<std::size_t>(i)] < floor_value) continue;
    auto trips = unpack(std::span<const LineId>(flat.data() + i * stride, static_cast<std::size_t>(stride)));
    if (!have || std::lexicographical_compare(trips.begin(), trips.end(), winner.begin(), winner.end())) {
      winner = std::move(trips);
      have = true;
    }
  }
  SearchResult r;
  r.trips = winner;
  r.eoc_status = with_trips(status, winner);
  r.i_max = tail_fault_current(c, r.eoc_status, relay);
  r.evaluated_count = count;
  r.wall_time_s = seconds_since(start);
  return r;
}

}  // namespace detail

/// Best status among all trips of at most k in-service, non-protected lines.
inline SearchResult global_enumerate(const GridCase& c, const TopologyState& initial_status, const RelayPoint& relay,
                                     int k, int workers = 1) {
  if (!initial_status.in_service(relay.line_id))
    throw std::invalid_argument("global_enumerate: protected line is out of service");
  return detail::enumerate_subsets(c, initial_status, relay, k, candidate_lines(c, initial_status, relay), workers);
}

/// Lines within r levels of the protected line: level 1 touches either of its
/// terminals, level j touches a bus j-1 in-service hops from a terminal.
inline std::vector<LineId> search_region(const GridCase& c, const TopologyState& status, const RelayPoint& relay,
                                         int r) {
  if (r < 1) throw std::invalid_argument("search_region: r must be >= 1");
  const int n = c.bus_count();
  std::vector<std::vector<BusId>> adj(static_cast<std::size_t>(n));
  for (const auto& l : c.lines()) {
    if (!status.in_service(l.id)) continue;
    adj[l.from_bus].push_back(l.to_bus);
    adj[l.to_bus].push_back(l.from_bus);
  }
  std::vector<int> hops(static_cast<std::size_t>(n), std::numeric_limits<int>::max());
  std::queue<BusId> q;
  for (BusId b : {c.line(relay.line_id).from_bus, c.line(relay.line_id).to_bus}) {
    hops[b] = 0;
    q.push(b);
  }
  while (!q.empty()) {
    BusId u = q.front();
    q.pop();
    for (BusId v : adj[u])
      if (hops[v] == std::numeric_limits<int>::max()) {
        hops[v] = hops[u] + 1;
        q.push(v);
      }
  }
  std::vector<LineId> out;
  for (LineId l : candidate_lines(c, status, relay)) {
    const auto& line = c.line(l);
    if (std::min(hops[line.from_bus], hops[line.to_bus]) <= r - 1) out.push_back(l);
  }
  return out;
}

inline SearchResult local_enumerate(const GridCase& c, const TopologyState& initial_status, const RelayPoint& relay,
                                    int k, int r, int workers = 1) {
  if (!initial_status.in_service(relay.line_id))
    throw std::invalid_argument("local_enumerate: protected line is out of service");
  return detail::enumerate_subsets(c, initial_status, relay, k, search_region(c, initial_status, relay, r), workers);
}

// ---------------------------------------------------------------------------
// Genetic algorithm

struct GAConfig {
  int population = 40;
  int generations = 60;
  double crossover_rate = 0.8;
  double mutation_rate = 0.05;
  double penalty_weight = 100.0;
  std::uint64_t seed = 1;
};

/// Fault current minus a penalty per trip beyond the budget k.
inline double ga_fitness(double current, int popcount, int k, double penalty_weight) {
  return current - penalty_weight * std::max(0, popcount - k);
}

inline SearchResult ga_search(const GridCase& c, const TopologyState& initial_status, const RelayPoint& relay, int k,
                              const GAConfig& cfg) {
  if (cfg.population < 2 || cfg.population % 2 != 0)
    throw std::invalid_argument("ga_search: population must be even and >= 2");
  if (cfg.crossover_rate < 0 || cfg.crossover_rate > 1 || cfg.mutation_rate < 0 || cfg.mutation_rate > 1)
    throw std::invalid_argument("ga_search: rates must lie in [0,1]");
  if (!initial_status.in_service(relay.line_id))
    throw std::invalid_argument("ga_search: protected line is out of service");
  const auto start = detail::Clock::now();
  const auto candidates = candidate_lines(c, initial_status, relay);
  const int len = static_cast<int>(candidates.size());
  std::mt19937_64 rng(cfg.seed);
  using Genome = std::vector<std::uint8_t>;

  std::map<Genome, double> current_cache;
  auto current_of = [&](const Genome& g) {
    auto it = current_cache.find(g);
    if (it != current_cache.end()) return it->second;
    TopologyState s = initial_status;
    for (int i = 0; i < len; ++i)
      if (g[i]) s.set(candidates[i], false);
    const double value = tail_fault_current(c, s, relay);
    current_cache.emplace(g, value);
    return value;
  };
  auto popcount = [](const Genome& g) { return static_cast<int>(std::count(g.begin(), g.end(), std::uint8_t{1})); };
  auto fitness = [&](const Genome& g) { return ga_fitness(current_of(g), popcount(g), k, cfg.penalty_weight); };

  std::vector<Genome> pop;
  pop.emplace_back(static_cast<std::size_t>(len), 0);
  std::uniform_int_distribution<int> trips_dist(0, std::max(0, std::min(k, len)));
  while (static_cast<int>(pop.size()) < cfg.population) {
    Genome g(static_cast<std::size_t>(len), 0);
    const int t = trips_dist(rng);
    for (int i = 0; i < t && len > 0; ++i) g[std::uniform_int_distribution<int>(0, len - 1)(rng)] = 1;
    pop.push_back(std::move(g));
  }

  Genome best_feasible;
  double best_feasible_current = -1.0;
  bool found = false;
  auto consider = [&](const Genome& g) {
    if (popcount(g) > k) return;
    const double cur = current_of(g);
    if (!found || cur > best_feasible_current) {
      best_feasible = g;
      best_feasible_current = cur;
      found = true;
    }
  };

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> pick(0, cfg.population - 1);
  for (int gen = 0; gen <= cfg.generations; ++gen) {
    std::vector<double> fit(pop.size());
    for (std::size_t i = 0; i < pop.size(); ++i) {
      fit[i] = fitness(pop[i]);
      consider(pop[i]);
    }
    if (gen == cfg.generations) break;
    const auto elite = static_cast<std::size_t>(std::max_element(fit.begin(), fit.end()) - fit.begin());
    auto tournament = [&]() -> const Genome& {
      const int a = pick(rng), b = pick(rng);
      return fit[a] >= fit[b] ? pop[a] : pop[b];
    };
    std::vector<Genome> next;
    next.reserve(pop.size());
    next.push_back(pop[elite]);
    while (static_cast<int>(next.size()) < cfg.population) {
      Genome a = tournament(), b = tournament();
      if (len > 1 && unit(rng) < cfg.crossover_rate) {
        const int cut = std::uniform_int_distribution<int>(1, len - 1)(rng);
        for (int i = cut; i < len; ++i) std::swap(a[i], b[i]);
      }
      for (auto* g : {&a, &b})
        for (auto& bit : *g)
          if (unit(rng) < cfg.mutation_rate) bit ^= 1;
      next.push_back(std::move(a));
      if (static_cast<int>(next.size()) < cfg.population) next.push_back(std::move(b));
    }
    pop = std::move(next);
  }

  SearchResult r;
  r.evaluated_count = static_cast<long>(current_cache.size());
  if (!found) {
    r.feasible = false;
    r.eoc_status = initial_status;
    r.i_max = tail_fault_current(c, initial_status, relay);
  } else {
    r.eoc_status = initial_status;
    for (int i = 0; i < len; ++i)
      if (best_feasible[i]) {
        r.eoc_status.set(candidates[i], false);
        r.trips.push_back(candidates[i]);
      }
    r.i_max = best_feasible_current;
  }
  r.wall_time_s = detail::seconds_since(start);
  return r;
}

// ---------------------------------------------------------------------------
// Sampling and labeled datasets

struct InitialCondition {
  TopologyState status;
  RelayPoint relay;
};

/// Random relay (uniform over all 2m relay points) and a uniform number of
/// 0..outage_limit initial outages among the other lines.
inline InitialCondition sample_initial_condition(const GridCase& c, int outage_limit, std::mt19937_64& rng) {
  const auto relays = c.relays();
  InitialCondition ic;
  ic.relay = relays[std::uniform_int_distribution<std::size_t>(0, relays.size() - 1)(rng)];
  ic.status = TopologyState::all_in_service(c.line_count());
  std::vector<LineId> others;
  for (LineId l = 0; l < c.line_count(); ++l)
    if (l != ic.relay.line_id) others.push_back(l);
  const int limit = std::min<int>(std::max(outage_limit, 0), static_cast<int>(others.size()));
  const int outages = std::uniform_int_distribution<int>(0, limit)(rng);
  for (int i = 0; i < outages; ++i) {
    const auto j = std::uniform_int_distribution<std::size_t>(static_cast<std::size_t>(i), others.size() - 1)(rng);
    std::swap(others[static_cast<std::size_t>(i)], others[j]);
    ic.status.set(others[static_cast<std::size_t>(i)], false);
  }
  return ic;
}

struct DatasetSample {
  TopologyState status;
  RelayPoint relay;
  std::vector<std::uint8_t> eoc_out;  // 1 = out of service in the enumerated EOC
  double i_max = 0.0;
};

inline std::vector<DatasetSample> gen_dataset(const GridCase& c, int sample_count, int initial_outage_limit, int k,
                                              std::uint64_t seed, int workers = 1) {
  if (sample_count < 1) throw std::invalid_argument("gen_dataset: sample_count must be >= 1");
  std::mt19937_64 rng(seed);
  std::vector<DatasetSample> out;
  out.reserve(static_cast<std::size_t>(sample_count));
  for (int i = 0; i < sample_count; ++i) {
    auto ic = sample_initial_condition(c, initial_outage_limit, rng);
    auto res = global_enumerate(c, ic.status, ic.relay, k, workers);
    DatasetSample s;
    s.status = ic.status;
    s.relay = ic.relay;
    s.eoc_out.resize(static_cast<std::size_t>(c.line_count()));
    for (LineId l = 0; l < c.line_count(); ++l) s.eoc_out[l] = res.eoc_status.in_service(l) ? 0 : 1;
    s.i_max = res.i_max;
    out.push_back(std::move(s));
  }
  return out;
}

inline std::string dataset_line(const DatasetSample& s) {
  nlohmann::ordered_json j;
  j["status"] = s.status.bits();
  j["relay"] = {{"line", s.relay.line_id}, {"terminal", std::string(to_string(s.relay.terminal))}};
  j["eoc"] = s.eoc_out;
  j["i_max"] = s.i_max;
  return j.dump();
}

inline void write_dataset(std::ostream& out, const std::vector<DatasetSample>& samples) {
  for (const auto& s : samples) out << dataset_line(s) << '\n';
}

inline std::vector<DatasetSample> parse_dataset(std::string_view text, const GridCase& c) {
  std::vector<DatasetSample> out;
  std::size_t pos = 0;
  int line_no = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    const std::string where = "dataset line " + std::to_string(line_no);
    try {
      auto j = nlohmann::json::parse(line);
      DatasetSample s;
      s.status = TopologyState(j.at("status").get<std::vector<std::uint8_t>>());
      s.relay.line_id = j.at("relay").at("line").get<int>();
      const auto term = j.at("relay").at("terminal").get<std::string>();
      if (term != "from" && term != "to") throw std::invalid_argument("bad terminal '" + term + "'");
      s.relay.terminal = term == "from" ? Terminal::from : Terminal::to;
      s.eoc_out = j.at("eoc").get<std::vector<std::uint8_t>>();
      s.i_max = j.at("i_max").get<double>();
      if (s.status.size() != c.line_count() || static_cast<int>(s.eoc_out.size()) != c.line_count())
        throw std::invalid_argument("vector length does not match case line count");
      if (s.relay.line_id < 0 || s.relay.line_id >= c.line_count())
        throw std::invalid_argument("relay line out of range");
      out.push_back(std::move(s));
    } catch (const std::exception& e) {
      throw std::runtime_error(where + ": " + e.what());
    }
  }
  return out;
}

}  // namespace eocs
