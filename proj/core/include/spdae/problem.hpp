#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "spdae/jet.hpp"

namespace spdae {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Square matrix family A(t, eps) given through its eps-Taylor coefficients and
/// mixed (t, eps) partials at a point. coeff(t, k) is the k-th eps-coefficient
/// A_k(t); t_partial(t, j, i) is d^{j+i} A(t, 0) / dt^j deps^i.
struct EpsSeriesMatrix {
    int n = 0;
    int max_order = 0; // highest total derivative order supplied
    std::function<MatrixXd(double t, int k)> coeff;
    std::function<MatrixXd(double t, int j, int i)> t_partial;
};

/// Nonlinearity f(x, t, eps) with a jet-evaluable interface. eval_jet composes
/// f with an eps-jet of x while t itself may carry an eps-jet (needed for the
/// stretched-time re-expansions, where t = eps * tau).
struct VectorFieldJet {
    int max_jet_order = 0;
    std::function<VectorXd(const VectorXd& x, double t, double eps)> eval;
    std::function<MatrixXd(const VectorXd& x, double t, double eps)> jac;
    std::function<JetVec(const JetVec& x, const Jet& t, int order)> eval_jet;
};

struct BoundaryData {
    MatrixXd M;
    MatrixXd N;
    std::function<VectorXd(int k)> d_coeff;

    VectorXd d(double eps, int order) const {
        VectorXd out = d_coeff(0);
        double p = 1.0;
        for (int k = 1; k <= order; ++k) {
            p *= eps;
            out += p * d_coeff(k);
        }
        return out;
    }
};

struct BVPProblem {
    std::string name;
    int n = 0;
    double T = 0.0;
    EpsSeriesMatrix A;
    VectorFieldJet f;
    BoundaryData bc;
    std::function<VectorXd(double t)> reduced_guess;
    /// Radius of the tube around the constructed solution on which smoothness
    /// is relied upon (documentation value, built-ins use 1.0).
    double tube_radius = 1.0;
};

/// A_k(t), the k-th eps-Taylor coefficient of A.
MatrixXd eval_A_coeff(const BVPProblem& problem, double t, int k);

/// Coefficient of eps^k in A(anchor + eps*stretched, eps): the layer
/// re-expansion of A. anchor = 0 gives the Pi-side matrices (stretched = tau >= 0),
/// anchor = T the Q-side ones (stretched = xi <= 0).
MatrixXd eval_A_layer_coeff(const BVPProblem& problem, double anchor, double stretched, int k);

/// eps-jet of f(x(eps), t, eps) at fixed t.
JetVec eval_f_jet(const BVPProblem& problem, const JetVec& x, double t, int order);

/// Registry of built-in problems.
BVPProblem registry_get(const std::string& name);
std::vector<std::string> registry_list();

/// Built-in problem factories (exposed so tests can vary the horizon).
BVPProblem make_ltp1(double T = 0.5);
BVPProblem make_ntp1(double T = 0.5);

} // namespace spdae
