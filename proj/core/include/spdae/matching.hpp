#pragma once

#include <Eigen/Dense>
#include <ostream>
#include <vector>

#include "spdae/layers.hpp"
#include "spdae/pencil.hpp"
#include "spdae/problem.hpp"
#include "spdae/regular.hpp"

namespace spdae {

/// Boundary operators acting on the layer anchor parameters, in the block
/// partition (1, p, q) of the normalized layer coordinates. D multiplies the
/// free parameters (end-side plus block, then start-side minus block); D1
/// multiplies the layer values determined by them.
struct MatchingSystem {
    Eigen::MatrixXd D;
    Eigen::MatrixXd D1;
    double condition = 0.0;
    int m1 = 1; // algebraic block
    int m2 = 0; // plus block (p)
    int m3 = 0; // minus block (q)
};

MatchingSystem build_matching_system(const BVPProblem& problem, const PencilStructure& structure);

/// Anchor parameters of every solved order. Order 0 holds (c0p, c02m); order
/// k >= 1 holds (b_kp, a_km), stored uniformly as end-side plus / start-side
/// minus values.
struct MatchConstants {
    Eigen::VectorXd c0p;  // end layer, p+1 components
    Eigen::VectorXd c02m; // start layer, q components
    struct Higher {
        Eigen::VectorXd b_kp;
        Eigen::VectorXd a_km;
    };
    std::vector<Higher> higher; // entry k-1 holds the order-k pair

    void to_csv(std::ostream& os) const;
};

struct Order0Result {
    MatchConstants constants; // only the order-0 entries filled
    LayerSolution pi0;
    LayerSolution q0;
    int iterations = 0;
    double residual = 0.0;
    bool used_newton = false;
};

/// Solves the nonlinear order-0 matching system for the layer anchor
/// parameters by the D^{-1} fixed point, falling back to damped
/// finite-difference Newton when the contraction stalls.
Order0Result solve_c0(const BVPProblem& problem, const PencilStructure& structure,
                      const SeriesField& reduced, const LayerGrid& pi_grid,
                      const LayerGrid& q_grid, double tol = 1e-10);

struct OrderKResult {
    Eigen::VectorXd b_kp;
    Eigen::VectorXd a_km;
    LayerSolution pik;
    LayerSolution qk;
    double condition = 0.0;
};

/// Solves the linear order-k matching system: one particular and n homogeneous
/// layer solves assemble the affine boundary map, then a dense solve fixes the
/// anchor parameters.
OrderKResult solve_ck(const BVPProblem& problem, const PencilStructure& structure,
                      const SeriesField& reduced, int k,
                      const std::vector<LayerSolution>& pi_lower,
                      const std::vector<LayerSolution>& q_lower, const LayerGrid& pi_grid,
                      const LayerGrid& q_grid, double tol = 1e-10);

} // namespace spdae
