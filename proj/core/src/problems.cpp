#include "spdae/problem.hpp"

#include <cmath>
#include <map>
#include <sstream>

#include "spdae/errors.hpp"

namespace spdae {

MatrixXd eval_A_coeff(const BVPProblem& problem, double t, int k) {
    if (k > problem.A.max_order)
        throw CapabilityError("eps-coefficient order " + std::to_string(k) +
                              " exceeds declared smoothness of problem " + problem.name);
    return problem.A.coeff(t, k);
}

MatrixXd eval_A_layer_coeff(const BVPProblem& problem, double anchor, double stretched, int k) {
    if (k > problem.A.max_order)
        throw CapabilityError("layer re-expansion order " + std::to_string(k) +
                              " exceeds declared smoothness of problem " + problem.name);
    const int n = problem.A.n;
    MatrixXd out = MatrixXd::Zero(n, n);
    double fact_i = 1.0; // i!
    for (int i = 0; i <= k; ++i) {
        if (i > 0) fact_i *= i;
        double fact_ki = 1.0; // (k-i)!
        for (int j = 2; j <= k - i; ++j) fact_ki *= j;
        out += std::pow(stretched, k - i) / (fact_i * fact_ki) *
               problem.A.t_partial(anchor, k - i, i);
    }
    return out;
}

JetVec eval_f_jet(const BVPProblem& problem, const JetVec& x, double t, int order) {
    if (x.order() < order)
        throw Error("x jet order is below the requested composition order");
    if (order > problem.f.max_jet_order)
        throw CapabilityError("jet order " + std::to_string(order) +
                              " exceeds declared smoothness of problem " + problem.name);
    return problem.f.eval_jet(x, Jet::constant(order, t), order);
}

namespace {

Eigen::Vector3d ltp1_s(double t) {
    return {1.0 + t * t, std::exp(-t), std::cos(t)};
}

// a(t) = t / (1 + t); j-th t-derivative.
double ltp1_a_deriv(double t, int j) {
    if (j == 0) return t / (1.0 + t);
    double fact = 1.0;
    for (int i = 2; i <= j; ++i) fact *= i;
    double sign = (j % 2 == 1) ? 1.0 : -1.0;
    return sign * fact * std::pow(1.0 + t, -(j + 1));
}

EpsSeriesMatrix make_ltp1_A() {
    EpsSeriesMatrix A;
    A.n = 3;
    A.max_order = 12;
    A.coeff = [](double t, int k) {
        MatrixXd m = MatrixXd::Zero(3, 3);
        if (k == 0) {
            m(0, 0) = t / (1.0 + t);
            m(1, 1) = 1.0;
            m(2, 2) = 1.0;
        }
        return m;
    };
    A.t_partial = [](double t, int j, int i) {
        MatrixXd m = MatrixXd::Zero(3, 3);
        if (i == 0) {
            m(0, 0) = ltp1_a_deriv(t, j);
            if (j == 0) {
                m(1, 1) = 1.0;
                m(2, 2) = 1.0;
            }
        }
        return m;
    };
    return A;
}

BVPProblem make_tp_problem(double T, bool nonlinear) {
    BVPProblem pb;
    pb.name = nonlinear ? "ntp1" : "ltp1";
    pb.n = 3;
    pb.T = T;
    pb.A = make_ltp1_A();
    pb.tube_radius = 1.0;

    pb.f.max_jet_order = 12;
    pb.f.eval = [nonlinear](const VectorXd& x, double t, double) {
        Eigen::Vector3d s = ltp1_s(t);
        Eigen::Vector3d y;
        y(0) = x(0) - s(0);
        y(1) = (1.0 + t) * (x(1) - s(1));
        y(2) = -(1.0 + t) * (x(2) - s(2));
        if (nonlinear) {
            y(1) += 0.25 * (x(1) - s(1)) * (x(1) - s(1));
            y(2) += 0.25 * (x(2) - s(2)) * (x(2) - s(2));
        }
        return VectorXd(y);
    };
    pb.f.jac = [nonlinear](const VectorXd& x, double t, double) {
        Eigen::Vector3d s = ltp1_s(t);
        MatrixXd J = MatrixXd::Zero(3, 3);
        J(0, 0) = 1.0;
        J(1, 1) = 1.0 + t;
        J(2, 2) = -(1.0 + t);
        if (nonlinear) {
            J(1, 1) += 0.5 * (x(1) - s(1));
            J(2, 2) += 0.5 * (x(2) - s(2));
        }
        return J;
    };
    pb.f.eval_jet = [nonlinear](const JetVec& x, const Jet& t, int order) {
        Jet s1 = 1.0 + t * t;
        Jet s2 = exp(-t);
        Jet s3 = cos(t);
        Jet b = 1.0 + t;
        Jet u1 = x.component(0) - s1;
        Jet u2 = x.component(1) - s2;
        Jet u3 = x.component(2) - s3;
        Jet y1 = u1;
        Jet y2 = b * u2;
        Jet y3 = -1.0 * (b * u3);
        if (nonlinear) {
            y2 += 0.25 * (u2 * u2);
            y3 += 0.25 * (u3 * u3);
        }
        JetVec out(3, order);
        out.set_component(0, y1);
        out.set_component(1, y2);
        out.set_component(2, y3);
        return out;
    };

    pb.bc.M = MatrixXd::Zero(3, 3);
    pb.bc.M(2, 2) = 1.0;
    pb.bc.N = MatrixXd::Zero(3, 3);
    pb.bc.N(0, 0) = 1.0;
    pb.bc.N(1, 1) = 1.0;
    Eigen::Vector3d d0;
    d0 << ltp1_s(T)(0) + 0.1, ltp1_s(T)(1) + 0.1, ltp1_s(0.0)(2) + 0.1;
    pb.bc.d_coeff = [d0](int k) {
        return k == 0 ? VectorXd(d0) : VectorXd(VectorXd::Zero(3));
    };

    pb.reduced_guess = [](double) { return VectorXd(Eigen::Vector3d(1.0, 1.0, 1.0)); };
    return pb;
}

} // namespace

BVPProblem make_ltp1(double T) { return make_tp_problem(T, false); }
BVPProblem make_ntp1(double T) { return make_tp_problem(T, true); }

BVPProblem registry_get(const std::string& name) {
    if (name == "ltp1") return make_ltp1();
    if (name == "ntp1") return make_ntp1();
    std::ostringstream msg;
    msg << "unknown problem '" << name << "'; available:";
    for (const auto& s : registry_list()) msg << ' ' << s;
    throw NotFoundError(msg.str());
}

std::vector<std::string> registry_list() { return {"ltp1", "ntp1"}; }

} // namespace spdae
