#pragma once

#include <Eigen/Dense>
#include <ostream>
#include <vector>

#include "spdae/layers.hpp"
#include "spdae/matching.hpp"
#include "spdae/pencil.hpp"
#include "spdae/problem.hpp"
#include "spdae/reference.hpp"
#include "spdae/regular.hpp"

namespace spdae {

struct ExpansionOptions {
    int order = 1;        // truncation order l
    int degree = 32;      // Chebyshev degree of the regular part
    int layer_nodes = 400;
    double layer_extent = 0.0; // stretched-time truncation; 0 picks it from the decay rates
    double tol = 1e-10;
    double t_floor = 1e-3;   // structure checks stay above this
    int structure_grid = 64; // structure-check sample count
};

/// Everything needed to evaluate the order-l composite expansion.
struct ExpansionBundle {
    BVPProblem problem;
    int order = 0;
    SeriesField regular;
    std::vector<LayerSolution> pi_layers; // orders 0..l
    std::vector<LayerSolution> q_layers;  // orders 0..l
    MatchConstants constants;
    PencilStructure structure;
    StructureReport report;
};

/// Runs the whole construction: reduced solve, structure verification, the
/// order-0 matching fixed point, then regular terms and matched layer pairs up
/// to the requested order. Throws StructureError when a verified condition
/// fails.
ExpansionBundle build_expansion(const BVPProblem& problem, const ExpansionOptions& opts = {});

/// Composite value at (t, eps): regular terms plus both layer corrections.
Eigen::VectorXd assemble(const ExpansionBundle& bundle, double t, double eps);

struct ResidualReport {
    double interior_max = 0.0;
    double boundary_norm = 0.0;
    double diff_step = 0.0; // centered-difference step used for x'
};

/// Defect of the composite expansion in the full problem at a fixed eps:
/// interior defect sampled uniformly on [delta, T - delta], boundary defect of
/// the two-point condition. x' is taken by centered differences with step
/// eps * 1e-3.
ResidualReport residuals(const ExpansionBundle& bundle, double eps, double delta = 0.1,
                         int probe_count = 200);

struct ConvergenceReport {
    int order = 0;
    std::vector<double> eps;
    std::vector<double> max_error;
    std::vector<double> interior_residual;
    std::vector<double> boundary_residual;
    double slope = 0.0; // log-log slope of max_error against eps

    void to_csv(std::ostream& os) const; // epsilon,max_error,interior_residual,boundary_residual
};

/// Compares the expansion against the stiff reference solver over an eps
/// sweep (one solve per eps, run concurrently) and fits the error slope.
ConvergenceReport convergence_study(const ExpansionBundle& bundle,
                                    const std::vector<double>& eps_list, int probe_count = 64,
                                    const MeshSpec& mesh = {}, double tol = 1e-10);

} // namespace spdae
