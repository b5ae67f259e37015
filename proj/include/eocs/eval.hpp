#pragma once

// Evaluation protocol: Scenario 1/2 accuracy against global enumeration,
// e-accuracy, method timing, selectivity and ablation comparisons.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "eocs/oracles.hpp"
#include "eocs/policy.hpp"
#include "eocs/training.hpp"

namespace eocs {

namespace detail {

/// Runs fn(i) for i in [0, count) on up to `workers` threads; each index is
/// handled exactly once, so per-index outputs are order independent.
inline void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max(1, std::min<int>(workers, static_cast<int>(std::max<std::size_t>(count, 1))));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t i = static_cast<std::size_t>(w); i < count; i += static_cast<std::size_t>(workers)) fn(i);
    });
}

inline double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

struct EvalConfig {
  int scenario = 1;
  int n1 = 1000;
  int n2 = 20;
  std::vector<double> e_levels{0.01, 0.02, 0.05};
  int k = 3;
  int initial_outages = 3;
  double equality_tolerance = 1e-9;
  std::uint64_t seed = 1;
  /// Scenario 2 relay subset; empty selects the "from" terminal of every line.
  std::vector<RelayPoint> relays;
  int workers = 1;

  std::vector<std::string> validate(const GridCase& c) const {
    std::vector<std::string> errs;
    if (scenario != 1 && scenario != 2) errs.push_back("scenario must be 1 or 2");
    if (scenario == 1 && n1 < 1) errs.push_back("N1 must be >= 1");
    if (scenario == 2 && n2 < 1) errs.push_back("N2 must be >= 1");
    if (!std::is_sorted(e_levels.begin(), e_levels.end())) errs.push_back("e levels must be sorted ascending");
    for (double e : e_levels)
      if (!(e > 0)) errs.push_back("e levels must be > 0");
    if (!(equality_tolerance > 0)) errs.push_back("equality tolerance must be > 0");
    if (k < 0) errs.push_back("k must be >= 0");
    if (initial_outages < 0) errs.push_back("initial outages must be >= 0");
    for (const auto& r : relays)
      if (r.line_id < 0 || r.line_id >= c.line_count())
        errs.push_back("relay line " + std::to_string(r.line_id) + " out of range");
    return errs;
  }
};

struct EvalRecord {
  TopologyState status;
  RelayPoint relay;
  double model_current = 0.0;
  double oracle_current = 0.0;
  double relative_gap = 0.0;
  double model_time_s = 0.0;
  double oracle_time_s = 0.0;
  bool correct = false;
  std::vector<std::uint8_t> e_correct;
};

struct EvalReport {
  std::vector<double> e_levels;
  std::vector<EvalRecord> records;
  double accuracy = 0.0;
  std::vector<double> e_accuracy;
  double mean_model_time_s = 0.0;
  double mean_oracle_time_s = 0.0;
};

/// Scenario 1: N1 random (status, relay) pairs. Scenario 2: N2 random statuses,
/// each evaluated at every configured relay whose line is in service.
inline std::vector<InitialCondition> scenario_samples(const GridCase& c, const EvalConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  std::vector<InitialCondition> out;
  if (cfg.scenario == 1) {
    for (int i = 0; i < cfg.n1; ++i) out.push_back(sample_initial_condition(c, cfg.initial_outages, rng));
    return out;
  }
  std::vector<RelayPoint> relays = cfg.relays;
  if (relays.empty())
    for (LineId l = 0; l < c.line_count(); ++l) relays.push_back({l, Terminal::from});
  const int limit = std::min(cfg.initial_outages, c.line_count());
  for (int i = 0; i < cfg.n2; ++i) {
    std::vector<LineId> lines(static_cast<std::size_t>(c.line_count()));
    std::iota(lines.begin(), lines.end(), 0);
    auto status = TopologyState::all_in_service(c.line_count());
    const int outages = std::uniform_int_distribution<int>(0, limit)(rng);
    for (int j = 0; j < outages; ++j) {
      const auto pick = std::uniform_int_distribution<std::size_t>(static_cast<std::size_t>(j), lines.size() - 1)(rng);
      std::swap(lines[static_cast<std::size_t>(j)], lines[pick]);
      status.set(lines[static_cast<std::size_t>(j)], false);
    }
    for (const auto& r : relays)
      if (status.in_service(r.line_id)) out.push_back({status, r});
  }
  return out;
}

inline EvalReport score_records(std::vector<EvalRecord> records, const std::vector<double>& e_levels,
                                double equality_tolerance) {
  EvalReport rep;
  rep.e_levels = e_levels;
  rep.e_accuracy.assign(e_levels.size(), 0.0);
  for (auto& r : records) {
    r.relative_gap = r.oracle_current > kCurrentAbsTol ? (r.oracle_current - r.model_current) / r.oracle_current : 0.0;
    r.correct = currents_equal(r.model_current, r.oracle_current, equality_tolerance);
    r.e_correct.assign(e_levels.size(), 0);
    for (std::size_t j = 0; j < e_levels.size(); ++j)
      r.e_correct[j] = (r.correct || within_fraction(r.model_current, r.oracle_current, e_levels[j])) ? 1 : 0;
    rep.accuracy += r.correct ? 1.0 : 0.0;
    for (std::size_t j = 0; j < e_levels.size(); ++j) rep.e_accuracy[j] += r.e_correct[j];
    rep.mean_model_time_s += r.model_time_s;
    rep.mean_oracle_time_s += r.oracle_time_s;
  }
  if (!records.empty()) {
    const double n = static_cast<double>(records.size());
    rep.accuracy /= n;
    for (double& a : rep.e_accuracy) a /= n;
    rep.mean_model_time_s /= n;
    rep.mean_oracle_time_s /= n;
  }
  rep.records = std::move(records);
  return rep;
}

inline EvalReport run_scenario(const nn::QNetworkParams& value_params, const GridCase& c, const EvalConfig& cfg,
                               const EnvConfig& env_config = {}) {
  const auto errs = cfg.validate(c);
  if (!errs.empty()) throw std::invalid_argument("run_scenario: " + errs.front());
  nn::check_compatible(value_params, c);
  const auto samples = scenario_samples(c, cfg);
  std::vector<EvalRecord> records(samples.size());
  detail::parallel_for(samples.size(), cfg.workers, [&](std::size_t i) {
    auto& rec = records[i];
    rec.status = samples[i].status;
    rec.relay = samples[i].relay;
    auto t0 = std::chrono::steady_clock::now();
    rec.model_current = infer_eoc(value_params, c, rec.status, rec.relay, cfg.k, env_config).i_max;
    rec.model_time_s = detail::elapsed(t0);
    t0 = std::chrono::steady_clock::now();
    rec.oracle_current = global_enumerate(c, rec.status, rec.relay, cfg.k).i_max;
    rec.oracle_time_s = detail::elapsed(t0);
  });
  return score_records(std::move(records), cfg.e_levels, cfg.equality_tolerance);
}

inline std::string level_name(double e) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g%%", e * 100.0);
  return buf;
}

/// Per-sample CSV without timings, so it is reproducible byte for byte.
inline std::string eval_records_csv(const EvalReport& rep) {
  std::string out = "index,status,relay,model_current,oracle_current,relative_gap,correct";
  for (double e : rep.e_levels) out += ",within_" + level_name(e);
  out += '\n';
  char buf[160];
  for (std::size_t i = 0; i < rep.records.size(); ++i) {
    const auto& r = rep.records[i];
    out += std::to_string(i) + "," + r.status.to_string() + ",";
    std::snprintf(buf, sizeof buf, "%d:%s,%.17g,%.17g,%.17g,%d", r.relay.line_id,
                  std::string(to_string(r.relay.terminal)).c_str(), r.model_current, r.oracle_current, r.relative_gap,
                  r.correct ? 1 : 0);
    out += buf;
    for (auto v : r.e_correct) out += v ? ",1" : ",0";
    out += '\n';
  }
  return out;
}

inline std::string eval_timing_csv(const EvalReport& rep) {
  std::string out = "index,model_time_s,oracle_time_s\n";
  char buf[96];
  for (std::size_t i = 0; i < rep.records.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g\n", i, rep.records[i].model_time_s, rep.records[i].oracle_time_s);
    out += buf;
  }
  return out;
}

inline nlohmann::ordered_json eval_summary_json(const EvalReport& rep) {
  nlohmann::ordered_json j;
  j["samples"] = rep.records.size();
  j["accuracy"] = rep.accuracy;
  nlohmann::ordered_json levels = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < rep.e_levels.size(); ++i) levels[level_name(rep.e_levels[i])] = rep.e_accuracy[i];
  j["e_accuracy"] = levels;
  return j;
}

// ---------------------------------------------------------------------------
// Selectivity

struct SelectivityCondition {
  TopologyState status;
  double model_current = 0.0;
  double oracle_current = 0.0;
  bool satisfied = false;
};

struct SelectivityReport {
  RelayPoint relay;
  double K = 1.2;
  std::vector<SelectivityCondition> conditions;
  std::size_t satisfied = 0;
  double satisfaction() const {
    return conditions.empty() ? 1.0 : static_cast<double>(satisfied) / static_cast<double>(conditions.size());
  }
};

/// Setting K * I_model must exceed the extreme current I_oracle. A condition
/// with no fault current at the relay imposes no requirement.
inline bool selectivity_holds(double model_current, double oracle_current, double K) {
  return oracle_current <= kCurrentAbsTol || K * model_current > oracle_current;
}

/// Every operating condition with up to `outage_limit` outages among the lines
/// other than the protected one.
inline std::vector<TopologyState> outage_conditions(const GridCase& c, LineId protected_line, int outage_limit) {
  std::vector<LineId> others;
  for (LineId l = 0; l < c.line_count(); ++l)
    if (l != protected_line) others.push_back(l);
  long count = 0;
  const int depth = std::max(0, std::min<int>(outage_limit, static_cast<int>(others.size())));
  const auto flat = detail::all_trip_sets(others, depth, count);
  const int stride = std::max(1, depth);
  std::vector<TopologyState> out;
  out.reserve(static_cast<std::size_t>(count));
  const auto base = TopologyState::all_in_service(c.line_count());
  for (long i = 0; i < count; ++i)
    out.push_back(detail::with_trips(base, std::span<const LineId>(flat.data() + i * stride, static_cast<std::size_t>(stride))));
  return out;
}

/// `count` distinct relay points drawn uniformly without replacement.
inline std::vector<RelayPoint> sample_relays(const GridCase& c, int count, std::uint64_t seed) {
  auto all = c.relays();
  std::mt19937_64 rng(seed);
  const int take = std::min<int>(std::max(count, 0), static_cast<int>(all.size()));
  std::vector<RelayPoint> out;
  for (int i = 0; i < take; ++i) {
    const auto j = std::uniform_int_distribution<std::size_t>(static_cast<std::size_t>(i), all.size() - 1)(rng);
    std::swap(all[static_cast<std::size_t>(i)], all[j]);
    out.push_back(all[static_cast<std::size_t>(i)]);
  }
  return out;
}

inline SelectivityReport selectivity_check(const nn::QNetworkParams& value_params, const GridCase& c,
                                           const RelayPoint& relay, double K, int k, int outage_limit = 2,
                                           int workers = 1, const EnvConfig& env_config = {}) {
  if (!(K > 1.0)) throw std::invalid_argument("selectivity_check: K must be > 1");
  if (relay.line_id < 0 || relay.line_id >= c.line_count())
    throw std::invalid_argument("selectivity_check: relay line out of range");
  nn::check_compatible(value_params, c);
  SelectivityReport rep;
  rep.relay = relay;
  rep.K = K;
  const auto states = outage_conditions(c, relay.line_id, outage_limit);
  rep.conditions.resize(states.size());
  detail::parallel_for(states.size(), workers, [&](std::size_t i) {
    auto& cond = rep.conditions[i];
    cond.status = states[i];
    cond.model_current = infer_eoc(value_params, c, cond.status, relay, k, env_config).i_max;
    cond.oracle_current = global_enumerate(c, cond.status, relay, k).i_max;
    cond.satisfied = selectivity_holds(cond.model_current, cond.oracle_current, K);
  });
  for (const auto& cond : rep.conditions) rep.satisfied += cond.satisfied ? 1 : 0;
  return rep;
}

inline std::string selectivity_csv(const std::vector<SelectivityReport>& reports) {
  std::string out = "relay,status,model_current,oracle_current,K,satisfied\n";
  char buf[160];
  for (const auto& rep : reports)
    for (const auto& cond : rep.conditions) {
      out += std::to_string(rep.relay.line_id) + ":" + std::string(to_string(rep.relay.terminal)) + "," +
             cond.status.to_string();
      std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%g,%d\n", cond.model_current, cond.oracle_current, rep.K,
                    cond.satisfied ? 1 : 0);
      out += buf;
    }
  return out;
}

// ---------------------------------------------------------------------------
// Method comparison

enum class Method { model, global, local, ga };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::model: return "graph-d3qn";
    case Method::global: return "global-enum";
    case Method::local: return "local-enum";
    case Method::ga: return "ga";
  }
  return "?";
}

inline Method parse_method(std::string_view s) {
  if (s == "model" || s == "graph-d3qn") return Method::model;
  if (s == "global" || s == "global-enum") return Method::global;
  if (s == "local" || s == "local-enum") return Method::local;
  if (s == "ga") return Method::ga;
  throw std::invalid_argument("unknown method '" + std::string(s) + "'");
}

struct SearchOptions {
  int radius = 2;
  GAConfig ga;
  EnvConfig env;
};

/// One search with the named method; `value_params` is needed only for model.
inline SearchResult run_method(Method m, const nn::QNetworkParams* value_params, const GridCase& c,
                               const TopologyState& status, const RelayPoint& relay, int k,
                               const SearchOptions& opt = {}) {
  switch (m) {
    case Method::model:
      if (value_params == nullptr) throw std::invalid_argument("model search requires a value network");
      return infer_eoc(*value_params, c, status, relay, k, opt.env);
    case Method::global: return global_enumerate(c, status, relay, k);
    case Method::local: return local_enumerate(c, status, relay, k, opt.radius);
    case Method::ga: return ga_search(c, status, relay, k, opt.ga);
  }
  throw std::logic_error("run_method: unhandled method");
}

struct BenchmarkRow {
  Method method = Method::global;
  std::size_t samples = 0;
  double accuracy = 0.0;
  double mean_time_s = 0.0;
  std::vector<double> currents;
};

/// All methods see the identical sample set; accuracy is against global
/// enumeration with the given relative tolerance.
inline std::vector<BenchmarkRow> benchmark(const std::vector<Method>& methods, const nn::QNetworkParams* value_params,
                                           const GridCase& c, const std::vector<InitialCondition>& samples, int k,
                                           const SearchOptions& opt = {}, double equality_tolerance = 1e-9) {
  std::vector<double> oracle(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i)
    oracle[i] = global_enumerate(c, samples[i].status, samples[i].relay, k).i_max;
  std::vector<BenchmarkRow> rows;
  for (Method m : methods) {
    BenchmarkRow row;
    row.method = m;
    row.samples = samples.size();
    double total = 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto r = run_method(m, value_params, c, samples[i].status, samples[i].relay, k, opt);
      total += detail::elapsed(t0);
      row.currents.push_back(r.i_max);
      correct += currents_equal(r.i_max, oracle[i], equality_tolerance) ? 1 : 0;
    }
    if (!samples.empty()) {
      row.accuracy = static_cast<double>(correct) / static_cast<double>(samples.size());
      row.mean_time_s = total / static_cast<double>(samples.size());
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string benchmark_csv(const std::vector<BenchmarkRow>& rows, bool with_time) {
  std::string out = with_time ? "method,samples,accuracy,mean_time_s\n" : "method,samples,accuracy\n";
  char buf[128];
  for (const auto& r : rows) {
    if (with_time)
      std::snprintf(buf, sizeof buf, "%s,%zu,%.6f,%.9g\n", std::string(to_string(r.method)).c_str(), r.samples,
                    r.accuracy, r.mean_time_s);
    else
      std::snprintf(buf, sizeof buf, "%s,%zu,%.6f\n", std::string(to_string(r.method)).c_str(), r.samples, r.accuracy);
    out += buf;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ablations

struct AblationVariant {
  std::string name;
  Ablation toggles;
  TrainReport curve;
  double accuracy = 0.0;
  std::vector<double> e_accuracy;
};

inline std::vector<std::pair<std::string, Ablation>> ablation_variants() {
  return {{"full", {}},
          {"no_guide", {true, false, false}},
          {"no_dueling", {false, true, false}},
          {"no_double", {false, false, true}}};
}

/// Trains the full method and each single ablation under the same config and
/// seed, then scores each on the same evaluation samples.
inline std::vector<AblationVariant> ablation_run(const GridCase& c, const nn::QNetworkParams* guide_params,
                                                 const TrainConfig& config, const EvalConfig& eval_config) {
  std::vector<AblationVariant> out;
  for (const auto& [name, toggles] : ablation_variants()) {
    TrainConfig cfg = config;
    cfg.ablation = toggles;
    auto trained = train_value(c, toggles.no_guide ? nullptr : guide_params, cfg);
    EnvConfig env = cfg.env;
    env.k_max = cfg.k_max;
    const auto rep = run_scenario(trained.params, c, eval_config, env);
    out.push_back({name, toggles, std::move(trained.report), rep.accuracy, rep.e_accuracy});
  }
  return out;
}

inline std::string ablation_csv(const std::vector<AblationVariant>& variants) {
  std::string out = "variant,round,guided_fraction,loss,accuracy,lr\n";
  char buf[192];
  for (const auto& v : variants)
    for (const auto& r : v.curve.rounds) {
      std::snprintf(buf, sizeof buf, "%s,%d,%.6f,%.17g,%.6f,%.17g\n", v.name.c_str(), r.round, r.guided_fraction, r.loss,
                    r.accuracy, r.learning_rate);
      out += buf;
    }
  return out;
}

}  // namespace eocs
