#pragma once

#include <cmath>

#include <Eigen/Dense>

#include "eocs/grid.hpp"

namespace eocs {

/// 0/1 bus adjacency over in-service lines (no self loops).
inline Eigen::MatrixXd line_adjacency(const GridCase& c, const TopologyState& state) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(c.bus_count(), c.bus_count());
  for (const auto& l : c.lines()) {
    if (!state.in_service(l.id)) continue;
    a(l.from_bus, l.to_bus) = 1.0;
    a(l.to_bus, l.from_bus) = 1.0;
  }
  return a;
}

/// D^-1/2 (A + I) D^-1/2 with D the row sums of A + I.
inline Eigen::MatrixXd normalize_adjacency(const Eigen::MatrixXd& adjacency) {
  const Eigen::Index n = adjacency.rows();
  Eigen::MatrixXd tilde = adjacency + Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd inv_sqrt = tilde.rowwise().sum().cwiseSqrt().cwiseInverse();
  return inv_sqrt.asDiagonal() * tilde * inv_sqrt.asDiagonal();
}

}  // namespace eocs
