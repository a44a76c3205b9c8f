#pragma once

#include <Eigen/Dense>
#include <functional>

#include "spdae/problem.hpp"

namespace spdae {

/// Piecewise-uniform layer-resolving mesh: a quarter of the cells in each
/// layer region of width min(T/4, layer_factor * eps * ln(1/eps)), the rest in
/// the interior.
struct MeshSpec {
    int cells = 4096;          // total cell count, a multiple of 4
    double layer_factor = 0.0; // transition-width multiplier; <= 0 picks a default
};

/// Implicit-midpoint collocation solution of the full stiff problem, kept in
/// the non-inverted form eps A x' = f so the turning point needs no division.
struct ReferenceSolution {
    double eps = 0.0;
    Eigen::VectorXd mesh;   // node coordinates, ascending
    Eigen::MatrixXd values; // n x nodes
    int newton_iterations = 0;
    double residual = 0.0;

    int nearest_node(double t) const;
    Eigen::VectorXd at_node(int j) const { return values.col(j); }
};

ReferenceSolution reference_solve(const BVPProblem& problem, double eps, const MeshSpec& mesh = {},
                                  double tol = 1e-10,
                                  const std::function<Eigen::VectorXd(double)>& guess = {});

} // namespace spdae
