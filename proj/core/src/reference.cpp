#include "spdae/reference.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <cmath>
#include <vector>

#include "spdae/errors.hpp"

namespace spdae {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd eval_A_full(const BVPProblem& problem, double t, double eps) {
    MatrixXd A = eval_A_coeff(problem, t, 0);
    double pw = 1.0;
    for (int k = 1; k <= problem.A.max_order; ++k) {
        pw *= eps;
        A += pw * eval_A_coeff(problem, t, k);
    }
    return A;
}

VectorXd build_mesh(double T, double eps, const MeshSpec& spec) {
    int N = spec.cells;
    if (N < 8 || N % 4 != 0) throw Error("reference mesh: cell count must be a multiple of 4, >= 8");
    double factor = spec.layer_factor > 0.0 ? spec.layer_factor : 2.0;
    double sigma = std::min(T / 4.0, factor * eps * std::log(1.0 / eps));
    sigma = std::max(sigma, 4.0 * eps);
    int nl = N / 4, nm = N / 2;
    VectorXd mesh(N + 1);
    int idx = 0;
    for (int j = 0; j < nl; ++j) mesh(idx++) = sigma * j / nl;
    for (int j = 0; j < nm; ++j) mesh(idx++) = sigma + (T - 2.0 * sigma) * j / nm;
    for (int j = 0; j <= nl; ++j) mesh(idx++) = (T - sigma) + sigma * j / nl;
    return mesh;
}

} // namespace

int ReferenceSolution::nearest_node(double t) const {
    const int N = static_cast<int>(mesh.size());
    int lo = 0, hi = N - 1;
    while (hi - lo > 1) {
        int mid = (lo + hi) / 2;
        (mesh(mid) <= t ? lo : hi) = mid;
    }
    return (t - mesh(lo) <= mesh(hi) - t) ? lo : hi;
}

ReferenceSolution reference_solve(const BVPProblem& problem, double eps, const MeshSpec& spec,
                                  double tol, const std::function<VectorXd(double)>& guess) {
    if (eps <= 0.0) throw Error("reference solve: eps must be positive");
    const int n = problem.n;
    ReferenceSolution sol;
    sol.eps = eps;
    sol.mesh = build_mesh(problem.T, eps, spec);
    const int nodes = static_cast<int>(sol.mesh.size());
    const int cells = nodes - 1;
    const int dof = n * nodes;

    VectorXd X(dof);
    for (int j = 0; j < nodes; ++j)
        X.segment(n * j, n) =
            guess ? guess(sol.mesh(j)) : problem.reduced_guess(sol.mesh(j));

    VectorXd d = problem.bc.d(eps, 8);

    auto residual = [&](const VectorXd& Xc) -> VectorXd {
        VectorXd F(dof);
        for (int i = 0; i < cells; ++i) {
            double h = sol.mesh(i + 1) - sol.mesh(i);
            double tm = 0.5 * (sol.mesh(i) + sol.mesh(i + 1));
            VectorXd xi = Xc.segment(n * i, n), xj = Xc.segment(n * (i + 1), n);
            VectorXd xm = 0.5 * (xi + xj);
            F.segment(n * i, n) =
                eps * (eval_A_full(problem, tm, eps) * (xj - xi)) -
                h * problem.f.eval(xm, tm, eps);
        }
        F.segment(n * cells, n) = problem.bc.M * Xc.head(n) + problem.bc.N * Xc.tail(n) - d;
        return F;
    };

    Eigen::SparseMatrix<double> J(dof, dof);
    std::vector<Eigen::Triplet<double>> trips;
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;

    VectorXd F = residual(X);
    double res = F.cwiseAbs().maxCoeff();
    const int max_iter = 60;
    for (int it = 0; it < max_iter; ++it) {
        if (res <= tol) break;
        trips.clear();
        for (int i = 0; i < cells; ++i) {
            double h = sol.mesh(i + 1) - sol.mesh(i);
            double tm = 0.5 * (sol.mesh(i) + sol.mesh(i + 1));
            VectorXd xm = 0.5 * (X.segment(n * i, n) + X.segment(n * (i + 1), n));
            MatrixXd Am = eps * eval_A_full(problem, tm, eps);
            MatrixXd Jm = 0.5 * h * problem.f.jac(xm, tm, eps);
            for (int r = 0; r < n; ++r)
                for (int c = 0; c < n; ++c) {
                    trips.emplace_back(n * i + r, n * i + c, -Am(r, c) - Jm(r, c));
                    trips.emplace_back(n * i + r, n * (i + 1) + c, Am(r, c) - Jm(r, c));
                }
        }
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c) {
                trips.emplace_back(n * cells + r, c, problem.bc.M(r, c));
                trips.emplace_back(n * cells + r, n * cells + c, problem.bc.N(r, c));
            }
        J.setFromTriplets(trips.begin(), trips.end());
        lu.compute(J);
        if (lu.info() != Eigen::Success)
            throw SolveError("reference solve: singular collocation Jacobian");
        VectorXd step = lu.solve(-F);
        double lambda = 1.0;
        bool advanced = false;
        for (int hlv = 0; hlv < 30; ++hlv) {
            VectorXd trial = X + lambda * step;
            VectorXd Ft = residual(trial);
            double rt = Ft.cwiseAbs().maxCoeff();
            if (rt < res || rt <= tol) {
                X = std::move(trial);
                F = std::move(Ft);
                res = rt;
                advanced = true;
                break;
            }
            lambda *= 0.5;
        }
        sol.newton_iterations = it + 1;
        if (!advanced)
            throw SolveError("reference solve: Newton line search stalled at residual " +
                             std::to_string(res));
    }
    if (res > tol)
        throw SolveError("reference solve: Newton did not reach the tolerance (residual " +
                         std::to_string(res) + ")");

    sol.residual = res;
    sol.values.resize(n, nodes);
    for (int j = 0; j < nodes; ++j) sol.values.col(j) = X.segment(n * j, n);
    return sol;
}

} // namespace spdae
