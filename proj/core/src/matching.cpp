#include "spdae/matching.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "spdae/errors.hpp"

namespace spdae {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

double cond2(const MatrixXd& A) {
    Eigen::JacobiSVD<MatrixXd> svd(A);
    double smin = svd.singularValues()(svd.singularValues().size() - 1);
    if (smin <= 0.0) return std::numeric_limits<double>::infinity();
    return svd.singularValues()(0) / smin;
}

// The layer values the boundary rows act on: the start layer's algebraic and
// plus components at tau = 0 and the end layer's minus components at xi = 0,
// in normalized coordinates.
VectorXd determined_values(const BVPProblem& problem, const PencilStructure& st,
                           const LayerSolution& pi, const LayerSolution& qe) {
    const int n = problem.n, p = st.p, q = st.q;
    VectorXd y = st.Q.partialPivLu().solve(pi.at_anchor());
    VectorXd R = st.U.partialPivLu().solve(qe.at_anchor());
    VectorXd z(n);
    z(0) = y(0);
    z.segment(1, p) = y.segment(1, p);
    z.tail(q) = R.tail(q);
    return z;
}

} // namespace

MatchingSystem build_matching_system(const BVPProblem& problem, const PencilStructure& st) {
    const int n = problem.n, p = st.p, q = st.q;
    if (problem.bc.M.rows() != n || problem.bc.N.rows() != n)
        throw Error("matching: boundary matrices must be square of size n");
    MatchingSystem sys;
    sys.m1 = 1;
    sys.m2 = p;
    sys.m3 = q;
    MatrixXd Mt = problem.bc.M * st.Q;
    MatrixXd K = problem.bc.N * st.U;
    sys.D.resize(n, n);
    sys.D.leftCols(p + 1) = K.leftCols(p + 1);
    sys.D.rightCols(q) = Mt.rightCols(q);
    sys.D1.resize(n, n);
    sys.D1.leftCols(p + 1) = Mt.leftCols(p + 1);
    sys.D1.rightCols(q) = K.rightCols(q);
    sys.condition = cond2(sys.D);
    return sys;
}

void MatchConstants::to_csv(std::ostream& os) const {
    os << "order,name,component,value\n";
    os << std::setprecision(17);
    auto emit = [&os](int order, const char* name, const Eigen::VectorXd& v) {
        for (int i = 0; i < v.size(); ++i)
            os << order << ',' << name << ',' << i << ',' << v(i) << '\n';
    };
    emit(0, "end_plus", c0p);
    emit(0, "start_minus", c02m);
    for (std::size_t k = 0; k < higher.size(); ++k) {
        emit(static_cast<int>(k) + 1, "end_plus", higher[k].b_kp);
        emit(static_cast<int>(k) + 1, "start_minus", higher[k].a_km);
    }
}

Order0Result solve_c0(const BVPProblem& problem, const PencilStructure& st,
                      const SeriesField& reduced, const LayerGrid& pi_grid,
                      const LayerGrid& q_grid, double tol) {
    const int n = problem.n, p = st.p, q = st.q;
    MatchingSystem sys = build_matching_system(problem, st);
    if (!std::isfinite(sys.condition) || sys.condition > 1e12)
        throw SolveError("order-0 matching: the anchor-parameter operator is numerically singular");
    Eigen::PartialPivLU<MatrixXd> Dlu(sys.D);

    VectorXd xb0 = reduced.eval(0, 0.0);
    VectorXd xbT = reduced.eval(0, problem.T);
    VectorXd base = problem.bc.M * xb0 + problem.bc.N * xbT - problem.bc.d_coeff(0);

    Order0Result out;
    // c stacks (c0p; c02m).
    VectorXd c = Dlu.solve(-base);
    auto rho_of = [&](const VectorXd& cc, LayerSolution& pi, LayerSolution& qe) -> VectorXd {
        pi = pi0_solve(problem, st, reduced, cc.tail(q), pi_grid, tol * 0.1);
        qe = q0_solve(problem, st, reduced, cc.head(p + 1), q_grid, tol * 0.1);
        VectorXd z = determined_values(problem, st, pi, qe);
        return base + sys.D * cc + sys.D1 * z;
    };

    LayerSolution pi, qe;
    VectorXd rho = rho_of(c, pi, qe);
    double prev = std::numeric_limits<double>::infinity();
    for (int it = 0; it < 100; ++it) {
        double nrm = rho.cwiseAbs().maxCoeff();
        out.iterations = it;
        out.residual = nrm;
        if (nrm <= tol) {
            out.constants.c0p = c.head(p + 1);
            out.constants.c02m = c.tail(q);
            out.pi0 = std::move(pi);
            out.q0 = std::move(qe);
            return out;
        }
        double ratio = nrm / prev;
        if (it >= 3 && ratio >= 0.9) break; // contraction too slow: switch to Newton
        prev = nrm;
        c -= Dlu.solve(rho);
        rho = rho_of(c, pi, qe);
    }

    // Damped finite-difference Newton fallback.
    out.used_newton = true;
    for (int it = 0; it < 50; ++it) {
        double nrm = rho.cwiseAbs().maxCoeff();
        out.residual = nrm;
        if (nrm <= tol) break;
        MatrixXd Jfd(n, n);
        LayerSolution tp, tq;
        for (int j = 0; j < n; ++j) {
            double delta = 1e-7 * std::max(1.0, std::abs(c(j)));
            VectorXd cp = c;
            cp(j) += delta;
            Jfd.col(j) = (rho_of(cp, tp, tq) - rho) / delta;
        }
        VectorXd step = Jfd.partialPivLu().solve(-rho);
        double lambda = 1.0;
        bool advanced = false;
        for (int h = 0; h < 25; ++h) {
            VectorXd trial = c + lambda * step;
            VectorXd trial_rho = rho_of(trial, tp, tq);
            if (trial_rho.cwiseAbs().maxCoeff() < nrm) {
                c = trial;
                rho = trial_rho;
                pi = std::move(tp);
                qe = std::move(tq);
                advanced = true;
                break;
            }
            lambda *= 0.5;
        }
        ++out.iterations;
        if (!advanced)
            throw SolveError("order-0 matching: Newton line search stalled at residual " +
                             std::to_string(nrm));
    }
    if (rho.cwiseAbs().maxCoeff() > tol)
        throw SolveError("order-0 matching: iteration did not reach the tolerance (residual " +
                         std::to_string(rho.cwiseAbs().maxCoeff()) + ")");
    out.constants.c0p = c.head(p + 1);
    out.constants.c02m = c.tail(q);
    out.pi0 = std::move(pi);
    out.q0 = std::move(qe);
    return out;
}

OrderKResult solve_ck(const BVPProblem& problem, const PencilStructure& st,
                      const SeriesField& reduced, int k,
                      const std::vector<LayerSolution>& pi_lower,
                      const std::vector<LayerSolution>& q_lower, const LayerGrid& pi_grid,
                      const LayerGrid& q_grid, double tol) {
    const int n = problem.n, p = st.p, q = st.q;
    if (reduced.orders_filled() < k + 1) throw Error("solve_ck: regular terms 0..k are required");
    MatchingSystem sys = build_matching_system(problem, st);

    VectorXd base = problem.bc.M * reduced.eval(k, 0.0) + problem.bc.N * reduced.eval(k, problem.T) -
                    problem.bc.d_coeff(k);

    double layer_tol = tol * 0.1;
    LayerSolution pi_part =
        pik_solve(problem, st, reduced, k, VectorXd::Zero(q), pi_lower, pi_grid, layer_tol);
    LayerSolution q_part =
        qk_solve(problem, st, reduced, k, VectorXd::Zero(p + 1), q_lower, q_grid, layer_tol);
    VectorXd z_part = determined_values(problem, st, pi_part, q_part);

    // The map c -> z is affine; columns come from unit anchor perturbations.
    MatrixXd Z = MatrixXd::Zero(n, n);
    for (int j = 0; j < p + 1; ++j) {
        LayerSolution qj = qk_solve(problem, st, reduced, k, VectorXd::Unit(p + 1, j), q_lower,
                                    q_grid, layer_tol);
        Z.col(j) = determined_values(problem, st, pi_part, qj) - z_part;
    }
    for (int j = 0; j < q; ++j) {
        LayerSolution pj = pik_solve(problem, st, reduced, k, VectorXd::Unit(q, j), pi_lower,
                                     pi_grid, layer_tol);
        Z.col(p + 1 + j) = determined_values(problem, st, pj, q_part) - z_part;
    }

    MatrixXd L = sys.D + sys.D1 * Z;
    double cnd = cond2(L);
    if (!std::isfinite(cnd) || cnd > 1e12) {
        std::ostringstream os;
        os << "order-" << k << " matching: boundary system is numerically singular (condition "
           << cnd << ")";
        throw SolveError(os.str());
    }
    VectorXd c = L.partialPivLu().solve(-(base + sys.D1 * z_part));

    OrderKResult out;
    out.b_kp = c.head(p + 1);
    out.a_km = c.tail(q);
    out.condition = cnd;
    out.pik = pik_solve(problem, st, reduced, k, out.a_km, pi_lower, pi_grid, layer_tol);
    out.qk = qk_solve(problem, st, reduced, k, out.b_kp, q_lower, q_grid, layer_tol);
    return out;
}

} // namespace spdae
