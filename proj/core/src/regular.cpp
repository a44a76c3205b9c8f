#include "spdae/regular.hpp"

#include <iomanip>

#include "spdae/errors.hpp"

namespace spdae {

namespace {

// One damped Newton solve of f(x, t, 0) = 0.
Eigen::VectorXd newton_reduced(const BVPProblem& problem, Eigen::VectorXd x, double t,
                               double tol) {
    const int max_iter = 50;
    const int max_halvings = 30;
    double res = problem.f.eval(x, t, 0.0).norm();
    for (int it = 0; it < max_iter; ++it) {
        if (res <= tol) return x;
        Eigen::MatrixXd J = problem.f.jac(x, t, 0.0);
        Eigen::FullPivLU<Eigen::MatrixXd> lu(J);
        if (!lu.isInvertible())
            throw SolveError("reduced equation: singular Jacobian at t = " + std::to_string(t) +
                             " (isolation violated)");
        Eigen::VectorXd step = lu.solve(-problem.f.eval(x, t, 0.0));
        double lambda = 1.0;
        for (int h = 0; h <= max_halvings; ++h) {
            Eigen::VectorXd trial = x + lambda * step;
            double trial_res = problem.f.eval(trial, t, 0.0).norm();
            if (trial_res < res || trial_res <= tol) {
                x = trial;
                res = trial_res;
                break;
            }
            lambda *= 0.5;
            if (h == max_halvings)
                throw SolveError("reduced equation: line search stalled at t = " +
                                 std::to_string(t));
        }
    }
    if (res <= tol) return x;
    throw SolveError("reduced equation: Newton did not converge at t = " + std::to_string(t));
}

} // namespace

JetVec regular_sum_layer_jet(const SeriesField& series, bool at_start, double stretched, int K) {
    const int anchor_node = at_start ? 0 : series.grid().size() - 1;
    JetVec out(series.dim(), K);
    for (int i = 0; i <= std::min(K, series.orders_filled() - 1); ++i) {
        double fact = 1.0;
        double pw = 1.0;
        for (int j = 0; i + j <= K; ++j) {
            if (j > 0) {
                fact *= j;
                pw *= stretched;
            }
            out.coeff(i + j) += pw / fact * series.deriv_samples(i, j).col(anchor_node);
        }
    }
    return out;
}

SeriesField solve_reduced(const BVPProblem& problem, int degree, double tol) {
    SeriesField series(problem.T, degree, problem.n);
    const auto& g = series.grid();
    Eigen::MatrixXd samples(problem.n, g.size());
    Eigen::VectorXd x = problem.reduced_guess(g.node(0));
    for (int j = 0; j < g.size(); ++j) {
        x = newton_reduced(problem, x, g.node(j), tol);
        samples.col(j) = x;
    }
    series.push_order(std::move(samples));
    return series;
}

Eigen::VectorXd extract_gbar(const BVPProblem& problem, const SeriesField& series, int k,
                             double t) {
    if (series.orders_filled() < k)
        throw Error("extract_gbar: series not filled through order k-1");
    JetVec x(problem.n, k);
    for (int i = 0; i < k; ++i) x.coeff(i) = series.eval(i, t);
    JetVec fj = eval_f_jet(problem, x, t, k);
    return fj.coeff(k);
}

void regular_term(const BVPProblem& problem, SeriesField& series, int k) {
    if (series.orders_filled() != k)
        throw Error("regular_term: orders 0.." + std::to_string(k - 1) + " must be filled first");
    const auto& g = series.grid();
    Eigen::MatrixXd samples(problem.n, g.size());
    for (int j = 0; j < g.size(); ++j) {
        double t = g.node(j);
        Eigen::VectorXd rhs = -extract_gbar(problem, series, k, t);
        for (int i = 0; i <= k - 1; ++i)
            rhs += eval_A_coeff(problem, t, i) * series.deriv(k - 1 - i, t);
        Eigen::MatrixXd J = problem.f.jac(series.eval(0, t), t, 0.0);
        Eigen::FullPivLU<Eigen::MatrixXd> lu(J);
        if (!lu.isInvertible() || lu.rcond() < 1e-12)
            throw SolveError("regular_term: near-singular Jacobian at t = " + std::to_string(t));
        samples.col(j) = lu.solve(rhs);
    }
    series.push_order(std::move(samples));
}

void SeriesField::to_csv(std::ostream& os) const {
    os << "t,k,component,value\n";
    os << std::setprecision(17);
    for (int k = 0; k < orders_filled(); ++k)
        for (int j = 0; j < grid_->size(); ++j)
            for (int i = 0; i < n_; ++i)
                os << grid_->node(j) << ',' << k << ',' << i << ',' << values_[k](i, j) << '\n';
}

} // namespace spdae
