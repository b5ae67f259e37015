#pragma once

// Reactance-only short-circuit engine: nodal susceptance, Z-bus, tail-end
// three-phase fault current, and minimum electrical distances.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <queue>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "eocs/grid.hpp"

namespace eocs {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Finite stand-in for "infinite" impedance/distance between disconnected buses.
inline double sentinel_cap(const GridCase& c) {
  return 10.0 * (c.total_line_reactance() + c.total_source_reactance());
}

inline Matrix build_susceptance(const GridCase& c, const TopologyState& state) {
  const int n = c.bus_count();
  Matrix b = Matrix::Zero(n, n);
  for (const auto& l : c.lines()) {
    if (!state.in_service(l.id)) continue;
    const double y = 1.0 / l.reactance_pu;
    b(l.from_bus, l.from_bus) += y;
    b(l.to_bus, l.to_bus) += y;
    b(l.from_bus, l.to_bus) -= y;
    b(l.to_bus, l.from_bus) -= y;
  }
  for (const auto& s : c.sources()) b(s.bus, s.bus) += 1.0 / s.reactance_pu;
  return b;
}

namespace detail {

/// Buses of one connected component together with its restricted susceptance block.
struct ComponentBlock {
  std::vector<BusId> buses;   // ascending
  std::vector<int> local;     // bus id -> local index, -1 outside
  Matrix susceptance;
  Vector injection;           // Norton source injections E/X
  bool has_source = false;
};

inline ComponentBlock component_block(const GridCase& c, const TopologyState& state,
                                      const std::vector<BusId>& labels, BusId member) {
  ComponentBlock blk;
  const int n = c.bus_count();
  const BusId root = labels[member];
  blk.local.assign(static_cast<std::size_t>(n), -1);
  for (BusId i = 0; i < n; ++i) {
    if (labels[i] == root) {
      blk.local[i] = static_cast<int>(blk.buses.size());
      blk.buses.push_back(i);
    }
  }
  const int size = static_cast<int>(blk.buses.size());
  blk.susceptance = Matrix::Zero(size, size);
  blk.injection = Vector::Zero(size);
  for (const auto& l : c.lines()) {
    if (!state.in_service(l.id)) continue;
    const int a = blk.local[l.from_bus];
    const int b = blk.local[l.to_bus];
    if (a < 0) continue;
    const double y = 1.0 / l.reactance_pu;
    blk.susceptance(a, a) += y;
    blk.susceptance(b, b) += y;
    blk.susceptance(a, b) -= y;
    blk.susceptance(b, a) -= y;
  }
  for (const auto& s : c.sources()) {
    const int g = blk.local[s.bus];
    if (g < 0) continue;
    blk.susceptance(g, g) += 1.0 / s.reactance_pu;
    blk.injection(g) += s.emf_pu / s.reactance_pu;
    blk.has_source = true;
  }
  return blk;
}

}  // namespace detail

/// Z-bus of the current topology. Entries between different source-fed
/// components are 0; rows/columns of buses with no source path hold the sentinel.
inline Matrix impedance_matrix(const GridCase& c, const TopologyState& state, double cap = 0.0) {
  const int n = c.bus_count();
  if (cap <= 0.0) cap = sentinel_cap(c);
  Matrix z = Matrix::Zero(n, n);
  const auto labels = components(c, state);
  std::vector<bool> islanded(static_cast<std::size_t>(n), false);
  for (BusId root = 0; root < n; ++root) {
    if (labels[root] != root) continue;
    auto blk = detail::component_block(c, state, labels, root);
    if (!blk.has_source) {
      for (BusId b : blk.buses) islanded[b] = true;
      continue;
    }
    Eigen::LLT<Matrix> llt(blk.susceptance);
    if (llt.info() != Eigen::Success)
      throw std::logic_error("impedance_matrix: singular source-fed component at bus " + std::to_string(root));
    const Matrix inv = llt.solve(Matrix::Identity(blk.susceptance.rows(), blk.susceptance.cols()));
    for (std::size_t a = 0; a < blk.buses.size(); ++a)
      for (std::size_t b = 0; b < blk.buses.size(); ++b)
        z(blk.buses[a], blk.buses[b]) = 0.5 * (inv(a, b) + inv(b, a));
  }
  for (BusId i = 0; i < n; ++i) {
    if (!islanded[i]) continue;
    z.row(i).setConstant(cap);
    z.col(i).setConstant(cap);
  }
  return z;
}

/// Current through the protected line for a bolted three-phase fault at its
/// tail end. Prefault voltages are those of the unloaded network (flat 1.0 pu
/// when every source EMF is 1.0). Returns 0 when the fault bus has no source path.
inline double tail_fault_current(const GridCase& c, const TopologyState& state, const RelayPoint& relay) {
  if (!state.in_service(relay.line_id))
    throw std::invalid_argument("tail_fault_current: protected line " + std::to_string(relay.line_id) +
                                " is out of service");
  const BusId f = c.fault_bus(relay);
  const BusId h = c.relay_bus(relay);
  const auto labels = components(c, state);
  auto blk = detail::component_block(c, state, labels, f);
  if (!blk.has_source) return 0.0;
  Eigen::LLT<Matrix> llt(blk.susceptance);
  if (llt.info() != Eigen::Success)
    throw std::logic_error("tail_fault_current: singular source-fed component at bus " + std::to_string(f));
  const int lf = blk.local[f];
  const int lh = blk.local[h];
  Vector unit = Vector::Zero(blk.susceptance.rows());
  unit(lf) = 1.0;
  const Vector z_col = llt.solve(unit);
  const Vector v_pre = llt.solve(blk.injection);
  const double z_ff = z_col(lf);
  const double z_hf = z_col(lh);
  const double v_h_post = v_pre(lh) - z_hf / z_ff * v_pre(lf);
  return std::abs(v_h_post) / c.line(relay.line_id).reactance_pu;
}

/// All-pairs minimum electrical distance by repeated Dijkstra over in-service lines.
inline Matrix electrical_distances(const GridCase& c, const TopologyState& state, double cap = 0.0) {
  const int n = c.bus_count();
  if (cap <= 0.0) cap = sentinel_cap(c);
  std::vector<std::vector<std::pair<BusId, double>>> adj(static_cast<std::size_t>(n));
  for (const auto& l : c.lines()) {
    if (!state.in_service(l.id)) continue;
    adj[l.from_bus].emplace_back(l.to_bus, l.reactance_pu);
    adj[l.to_bus].emplace_back(l.from_bus, l.reactance_pu);
  }
  constexpr double inf = std::numeric_limits<double>::infinity();
  Matrix d = Matrix::Constant(n, n, cap);
  std::vector<double> dist(static_cast<std::size_t>(n));
  using Item = std::pair<double, BusId>;
  for (BusId src = 0; src < n; ++src) {
    std::fill(dist.begin(), dist.end(), inf);
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    dist[src] = 0.0;
    pq.emplace(0.0, src);
    while (!pq.empty()) {
      auto [du, u] = pq.top();
      pq.pop();
      if (du > dist[u]) continue;
      for (auto [v, w] : adj[u]) {
        const double nd = du + w;
        if (nd < dist[v]) {
          dist[v] = nd;
          pq.emplace(nd, v);
        }
      }
    }
    for (BusId j = 0; j < n; ++j)
      if (dist[j] < inf) d(src, j) = std::min(dist[j], cap);
  }
  // Forward and reverse path sums can round differently.
  return d.cwiseMin(d.transpose());
}

}  // namespace eocs
