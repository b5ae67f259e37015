#pragma once

// Case generators and independent reference computations shared by the tests.
// The references deliberately avoid the library's own routines.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "eocs/grid.hpp"

namespace testing_support {

using eocs::GridCase;
using eocs::Line;
using eocs::Source;
using eocs::TopologyState;

inline std::string cases_dir() { return EOCS_DATA_DIR "/cases/"; }
inline std::string configs_dir() { return EOCS_DATA_DIR "/configs/"; }

/// Random tree with one source at bus 0. parent[i] < i, so bus 0 is the root.
struct RadialCase {
  GridCase grid;
  std::vector<int> parent;       // parent bus, -1 for root
  std::vector<int> parent_line;  // line joining bus to its parent
};

inline RadialCase random_radial(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> x(0.02, 0.6), xs(0.01, 0.2), emf(0.9, 1.1);
  RadialCase rc;
  rc.parent.assign(static_cast<std::size_t>(n), -1);
  rc.parent_line.assign(static_cast<std::size_t>(n), -1);
  std::vector<Line> lines;
  for (int b = 1; b < n; ++b) {
    const int p = std::uniform_int_distribution<int>(0, b - 1)(rng);
    rc.parent[static_cast<std::size_t>(b)] = p;
    rc.parent_line[static_cast<std::size_t>(b)] = static_cast<int>(lines.size());
    lines.push_back({static_cast<int>(lines.size()), p, b, x(rng)});
  }
  rc.grid = GridCase("radial", n, lines, {Source{0, emf(rng), xs(rng)}});
  return rc;
}

/// Connected meshed case: a random spanning tree plus extra chords, with
/// one to three sources.
inline GridCase random_meshed(int n, int extra, std::mt19937_64& rng, bool dyadic = false) {
  auto reactance = [&]() {
    if (dyadic) return std::uniform_int_distribution<int>(1, 64)(rng) / 64.0;
    return std::uniform_real_distribution<double>(0.02, 0.6)(rng);
  };
  std::vector<Line> lines;
  std::vector<std::pair<int, int>> used;
  auto add = [&](int a, int b) {
    auto key = std::minmax(a, b);
    if (a == b || std::find(used.begin(), used.end(), std::pair<int, int>(key.first, key.second)) != used.end())
      return;
    used.emplace_back(key.first, key.second);
    lines.push_back({static_cast<int>(lines.size()), a, b, reactance()});
  };
  for (int b = 1; b < n; ++b) add(std::uniform_int_distribution<int>(0, b - 1)(rng), b);
  for (int i = 0; i < extra; ++i)
    add(std::uniform_int_distribution<int>(0, n - 1)(rng), std::uniform_int_distribution<int>(0, n - 1)(rng));
  std::vector<Source> sources;
  const int ns = std::uniform_int_distribution<int>(1, std::min(3, n))(rng);
  std::vector<int> buses(static_cast<std::size_t>(n));
  std::iota(buses.begin(), buses.end(), 0);
  std::shuffle(buses.begin(), buses.end(), rng);
  for (int i = 0; i < ns; ++i)
    sources.push_back({buses[static_cast<std::size_t>(i)], std::uniform_real_distribution<double>(0.9, 1.1)(rng),
                       std::uniform_real_distribution<double>(0.02, 0.3)(rng)});
  return GridCase("meshed", n, lines, sources);
}

inline TopologyState random_outages(const GridCase& c, int max_out, std::mt19937_64& rng, int keep = -1) {
  auto s = TopologyState::all_in_service(c.line_count());
  const int outs = std::uniform_int_distribution<int>(0, max_out)(rng);
  for (int i = 0; i < outs; ++i) {
    const int l = std::uniform_int_distribution<int>(0, c.line_count() - 1)(rng);
    if (l != keep) s.set(l, false);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Reference computations

/// Union-find partition; returns for each bus the smallest bus id in its set.
inline std::vector<int> union_find_labels(const GridCase& c, const TopologyState& s) {
  std::vector<int> parent(static_cast<std::size_t>(c.bus_count()));
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int a) {
    return parent[static_cast<std::size_t>(a)] == a ? a : parent[static_cast<std::size_t>(a)] = find(parent[static_cast<std::size_t>(a)]);
  };
  for (const auto& l : c.lines()) {
    if (!s.in_service(l.id)) continue;
    const int a = find(l.from_bus), b = find(l.to_bus);
    if (a != b) parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
  }
  std::vector<int> root(static_cast<std::size_t>(c.bus_count()));
  for (int b = 0; b < c.bus_count(); ++b) root[static_cast<std::size_t>(b)] = find(b);
  std::vector<int> smallest(static_cast<std::size_t>(c.bus_count()), std::numeric_limits<int>::max());
  for (int b = 0; b < c.bus_count(); ++b)
    smallest[static_cast<std::size_t>(root[static_cast<std::size_t>(b)])] =
        std::min(smallest[static_cast<std::size_t>(root[static_cast<std::size_t>(b)])], b);
  std::vector<int> out(static_cast<std::size_t>(c.bus_count()));
  for (int b = 0; b < c.bus_count(); ++b) out[static_cast<std::size_t>(b)] = smallest[static_cast<std::size_t>(root[static_cast<std::size_t>(b)])];
  return out;
}

/// Element-by-element susceptance stamping.
inline Eigen::MatrixXd restamp(const GridCase& c, const TopologyState& s) {
  const int n = c.bus_count();
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double v = 0.0;
      for (const auto& l : c.lines()) {
        if (!s.in_service(l.id)) continue;
        const bool touches_i = l.from_bus == i || l.to_bus == i;
        if (i == j && touches_i) v += 1.0 / l.reactance_pu;
        if (i != j && ((l.from_bus == i && l.to_bus == j) || (l.from_bus == j && l.to_bus == i))) v -= 1.0 / l.reactance_pu;
      }
      if (i == j)
        for (const auto& src : c.sources())
          if (src.bus == i) v += 1.0 / src.reactance_pu;
      b(i, j) = v;
    }
  return b;
}

/// Bolted fault at the far end of the protected line: clamp the fault bus to
/// zero, solve the remaining nodal equations with Norton source injections,
/// and return the current arriving through the protected line.
inline double direct_nodal_current(const GridCase& c, const TopologyState& s, const eocs::RelayPoint& relay) {
  const int f = c.fault_bus(relay), h = c.relay_bus(relay);
  const auto labels = union_find_labels(c, s);
  std::vector<int> idx(static_cast<std::size_t>(c.bus_count()), -1);
  std::vector<int> members;
  for (int b = 0; b < c.bus_count(); ++b)
    if (labels[static_cast<std::size_t>(b)] == labels[static_cast<std::size_t>(f)] && b != f) {
      idx[static_cast<std::size_t>(b)] = static_cast<int>(members.size());
      members.push_back(b);
    }
  bool has_source = false;
  for (const auto& src : c.sources())
    if (labels[static_cast<std::size_t>(src.bus)] == labels[static_cast<std::size_t>(f)]) has_source = true;
  if (!has_source || members.empty()) return 0.0;
  const auto full = restamp(c, s);
  const int r = static_cast<int>(members.size());
  Eigen::MatrixXd y(r, r);
  Eigen::VectorXd inj = Eigen::VectorXd::Zero(r);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < r; ++j) y(i, j) = full(members[static_cast<std::size_t>(i)], members[static_cast<std::size_t>(j)]);
  for (const auto& src : c.sources())
    if (idx[static_cast<std::size_t>(src.bus)] >= 0) inj(idx[static_cast<std::size_t>(src.bus)]) += src.emf_pu / src.reactance_pu;
  const Eigen::VectorXd v = y.fullPivLu().solve(inj);
  return std::abs(v(idx[static_cast<std::size_t>(h)])) / c.line(relay.line_id).reactance_pu;
}

/// All-pairs shortest reactance paths; unreachable pairs get `cap`.
inline Eigen::MatrixXd floyd_warshall(const GridCase& c, const TopologyState& s, double cap) {
  const int n = c.bus_count();
  const double inf = std::numeric_limits<double>::infinity();
  Eigen::MatrixXd d = Eigen::MatrixXd::Constant(n, n, inf);
  for (int i = 0; i < n; ++i) d(i, i) = 0.0;
  for (const auto& l : c.lines())
    if (s.in_service(l.id)) {
      d(l.from_bus, l.to_bus) = std::min(d(l.from_bus, l.to_bus), l.reactance_pu);
      d(l.to_bus, l.from_bus) = d(l.from_bus, l.to_bus);
    }
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (d(i, k) + d(k, j) < d(i, j)) d(i, j) = d(i, k) + d(k, j);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (d(i, j) == inf) d(i, j) = cap;
  return d;
}

/// Best current over all trip sets of size <= 2 by explicit nested loops;
/// ties keep the first set met in (none, {i}, {i, j}) order.
struct NestedBest {
  double current = 0.0;
  std::vector<int> trips;
};

template <class CurrentFn>
NestedBest nested_enumeration_k2(const GridCase& c, const TopologyState& s, int protected_line, CurrentFn current) {
  std::vector<int> cand;
  for (int l = 0; l < c.line_count(); ++l)
    if (l != protected_line && s.in_service(l)) cand.push_back(l);
  NestedBest best{current(s), {}};
  auto consider = [&](const TopologyState& t, std::vector<int> trips) {
    const double v = current(t);
    if (v > best.current * (1 + 1e-12) + 1e-300) best = {v, std::move(trips)};
  };
  for (std::size_t i = 0; i < cand.size(); ++i) {
    auto t1 = s;
    t1.set(cand[i], false);
    consider(t1, {cand[i]});
  }
  for (std::size_t i = 0; i < cand.size(); ++i)
    for (std::size_t j = i + 1; j < cand.size(); ++j) {
      auto t2 = s;
      t2.set(cand[i], false);
      t2.set(cand[j], false);
      consider(t2, {cand[i], cand[j]});
    }
  return best;
}

}  // namespace testing_support
