#pragma once

#include <Eigen/Dense>
#include <functional>
#include <ostream>
#include <vector>

#include "spdae/chebyshev.hpp"
#include "spdae/pencil.hpp"
#include "spdae/problem.hpp"
#include "spdae/regular.hpp"

namespace spdae {

enum class Side { Start, End };

/// Stretched-time grid for a truncated semi-infinite layer domain. Node 0 is
/// the anchor (tau = 0 resp. xi = 0); magnitudes increase geometrically away
/// from it. For the end side the stored nodes are negative.
struct LayerGrid {
    Eigen::VectorXd nodes;
    Side side = Side::Start;

    int size() const { return static_cast<int>(nodes.size()); }
    double extent() const { return std::abs(nodes(nodes.size() - 1)); }

    static LayerGrid make(Side side, double extent, int count = 400, double grading = 6.0);
};

/// Default truncation: extent max(40 / decay_rate, 40).
LayerGrid default_layer_grid(const PencilStructure& structure, Side side, int count = 400);

struct DecayEstimate {
    bool defined = false;
    double kappa = 0.0;
    double rate = 0.0;
    int fit_begin = 0;
    int fit_end = 0;
};

/// One boundary-layer term in original coordinates, with the normalized-block
/// values retained for the matching machinery.
class LayerSolution {
public:
    LayerSolution() = default;
    LayerSolution(LayerGrid grid, Eigen::MatrixXd values, Side side, int order,
                  Eigen::VectorXd parameter);

    const LayerGrid& grid() const { return grid_; }
    const Eigen::MatrixXd& values() const { return values_; }
    Side side() const { return side_; }
    int order() const { return order_; }
    const Eigen::VectorXd& parameter() const { return parameter_; }
    const DecayEstimate& decay() const { return decay_; }
    void set_decay(DecayEstimate d) { decay_ = d; }

    /// Value at a stretched time; zero beyond the truncation window.
    Eigen::VectorXd eval(double stretched) const;
    /// d/d(stretched) of the interpolant (zero beyond truncation).
    Eigen::VectorXd deriv(double stretched) const;

    Eigen::VectorXd at_anchor() const { return values_.col(0); }

    void to_csv(std::ostream& os) const;

private:
    LayerGrid grid_;
    Eigen::MatrixXd values_; // n x nodes, original coordinates
    Side side_ = Side::Start;
    int order_ = 0;
    Eigen::VectorXd parameter_;
    DecayEstimate decay_;
    CubicSpline spline_;
};

/// Flow of a homogeneous layer system restricted to one dichotomy block,
/// integrated adaptively; stable when used in the decaying direction.
class Propagator {
public:
    enum class Block { Plus, Minus };

    Propagator(std::function<Eigen::MatrixXd(double)> coeff, int dim_plus, int dim_minus);

    int dim(Block b) const { return b == Block::Plus ? dim_plus_ : dim_minus_; }

    Eigen::VectorXd apply(Block block, double from, double to, const Eigen::VectorXd& v) const;

private:
    std::function<Eigen::MatrixXd(double)> coeff_;
    int dim_plus_, dim_minus_;
};

/// Solves the algebraic first row of the normalized layer-zero system for the
/// first normalized component, given the remaining components.
double algebraic_first_component(const BVPProblem& problem, const PencilStructure& structure,
                                 const Eigen::VectorXd& xbar0_at_anchor,
                                 const Eigen::VectorXd& pi02, double tol = 1e-12);

/// Leading-order start layer by successive approximation of the split integral
/// equations; c02m parameterizes the decaying minus block at the anchor.
LayerSolution pi0_solve(const BVPProblem& problem, const PencilStructure& structure,
                        const SeriesField& reduced, const Eigen::VectorXd& c02m,
                        const LayerGrid& grid, double tol = 1e-10);

/// Leading-order end layer; c0p anchors the first p+1 components at xi = 0.
LayerSolution q0_solve(const BVPProblem& problem, const PencilStructure& structure,
                       const SeriesField& reduced, const Eigen::VectorXd& c0p,
                       const LayerGrid& grid, double tol = 1e-10);

/// Sup-norm change after one more application of the layer-zero integral
/// operator (the discrete fixed-point residual).
double pi0_fixed_point_residual(const BVPProblem& problem, const PencilStructure& structure,
                                const SeriesField& reduced, const LayerSolution& layer);
double q0_fixed_point_residual(const BVPProblem& problem, const PencilStructure& structure,
                               const SeriesField& reduced, const LayerSolution& layer);

/// Variational flow along the leading-order layer (the homogeneous part of the
/// order-k layer systems).
Propagator propagator(const BVPProblem& problem, const PencilStructure& structure,
                      const SeriesField& reduced, Side side, const LayerSolution& layer0);

/// Order-k start layer: linear dichotomy-split variation of constants, with the
/// decaying minus block anchored at a_km. pi_lower holds layers 0..k-1.
LayerSolution pik_solve(const BVPProblem& problem, const PencilStructure& structure,
                        const SeriesField& reduced, int k, const Eigen::VectorXd& a_km,
                        const std::vector<LayerSolution>& pi_lower, const LayerGrid& grid,
                        double tol = 1e-10);

/// Order-k end layer; b_kp anchors the plus block at xi = 0. q_lower holds
/// layers 0..k-1.
LayerSolution qk_solve(const BVPProblem& problem, const PencilStructure& structure,
                       const SeriesField& reduced, int k, const Eigen::VectorXd& b_kp,
                       const std::vector<LayerSolution>& q_lower, const LayerGrid& grid,
                       double tol = 1e-10);

/// Least-squares exponential decay fit over the window where the norm lies in
/// [1e-10, 0.1] times the anchor norm. Identically-zero layers yield the
/// undefined-rate signal (defined == false).
DecayEstimate decay_fit(const LayerSolution& layer);

} // namespace spdae
