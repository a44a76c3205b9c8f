#include "spdae/layers.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "spdae/errors.hpp"
#include "spdae/stats.hpp"

namespace spdae {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// 6-point Gauss-Legendre rule on [0, 1].
constexpr int kGL = 6;
const double kGLNode[kGL] = {
    0.5 - 0.5 * 0.9324695142031521, 0.5 - 0.5 * 0.6612093864662645,
    0.5 - 0.5 * 0.2386191860831969, 0.5 + 0.5 * 0.2386191860831969,
    0.5 + 0.5 * 0.6612093864662645, 0.5 + 0.5 * 0.9324695142031521};
const double kGLWeight[kGL] = {0.5 * 0.1713244923791704, 0.5 * 0.3607615730481386,
                               0.5 * 0.4679139345726910, 0.5 * 0.4679139345726910,
                               0.5 * 0.3607615730481386, 0.5 * 0.1713244923791704};

// Adaptive Dormand-Prince 5(4); supports integration in either direction.
VectorXd ode45(const std::function<VectorXd(double, const VectorXd&)>& f, double t0, double t1,
               VectorXd y, double rtol = 1e-11, double atol = 1e-13) {
    if (t0 == t1) return y;
    static const double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static const double a21 = 1.0 / 5;
    static const double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static const double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static const double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                        a54 = -212.0 / 729;
    static const double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                        a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    static const double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                        b6 = 11.0 / 84;
    static const double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                        e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
    double dir = t1 > t0 ? 1.0 : -1.0;
    double t = t0;
    double h = dir * std::min(std::abs(t1 - t0), std::abs(t1 - t0) / 8.0 + 1e-8);
    VectorXd k1 = f(t, y);
    for (int step = 0; step < 200000; ++step) {
        if (dir * (t - t1) >= 0.0) return y;
        if (dir * (t + h - t1) > 0.0) h = t1 - t;
        VectorXd k2 = f(t + c2 * h, y + h * (a21 * k1));
        VectorXd k3 = f(t + c3 * h, y + h * (a31 * k1 + a32 * k2));
        VectorXd k4 = f(t + c4 * h, y + h * (a41 * k1 + a42 * k2 + a43 * k3));
        VectorXd k5 = f(t + c5 * h, y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
        VectorXd k6 = f(t + h, y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
        VectorXd ynew = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
        VectorXd k7 = f(t + h, ynew);
        VectorXd err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
        double scale = 0.0;
        for (int i = 0; i < y.size(); ++i) {
            double sc = atol + rtol * std::max(std::abs(y(i)), std::abs(ynew(i)));
            scale = std::max(scale, std::abs(err(i)) / sc);
        }
        if (scale <= 1.0) {
            t += h;
            y = std::move(ynew);
            k1 = std::move(k7);
        }
        double factor = scale > 0.0 ? 0.9 * std::pow(scale, -0.2) : 5.0;
        h *= std::min(5.0, std::max(0.2, factor));
    }
    throw SolveError("layer sweep: adaptive integrator exceeded the step budget");
}

// Integrates v' = f(t, v) through consecutive grid nodes (in the order given)
// and records the state at every node.
MatrixXd sweep(const std::function<VectorXd(double, const VectorXd&)>& f,
               const std::vector<double>& nodes, VectorXd v0) {
    MatrixXd out(v0.size(), static_cast<int>(nodes.size()));
    out.col(0) = v0;
    for (std::size_t j = 1; j < nodes.size(); ++j) {
        v0 = ode45(f, nodes[j - 1], nodes[j], std::move(v0));
        out.col(static_cast<int>(j)) = v0;
    }
    return out;
}

std::string contraction_message(const char* what, int iter, double diff, double ratio) {
    std::ostringstream os;
    os << what << ": successive approximation did not contract (iteration " << iter
       << ", change " << diff << ", ratio " << ratio << ")";
    return os.str();
}

// Shared state for the leading-order start-layer integral operator.
struct Pi0Op {
    const BVPProblem* problem;
    const PencilStructure* st;
    VectorXd xb0;     // reduced solution at t = 0
    MatrixXd Lam;     // (n-1) block of P J0 Q
    VectorXd tau;     // ascending nodes
    VectorXd c;       // minus-block anchor value
    mutable VectorXd y1; // algebraic component per node (Newton seeds)

    int n() const { return problem->n; }
    int p() const { return st->p; }
    int q() const { return st->q; }
    int N() const { return static_cast<int>(tau.size()); }

    double solve_y1(const VectorXd& y2, double seed) const {
        double v = seed;
        for (int it = 0; it < 80; ++it) {
            VectorXd y(n());
            y(0) = v;
            y.tail(n() - 1) = y2;
            VectorXd x = xb0 + st->Q * y;
            double F = (st->P * problem->f.eval(x, 0.0, 0.0))(0);
            if (std::abs(F) <= 1e-13) return v;
            double dF = (st->P * problem->f.jac(x, 0.0, 0.0) * st->Q)(0, 0);
            if (std::abs(dF) < 1e-12)
                throw SolveError("layer-zero first component: degenerate algebraic row");
            v -= F / dF;
        }
        throw SolveError("layer-zero first component: Newton did not converge");
    }

    // One application of the split integral operator; returns the sup change.
    double apply(MatrixXd& Y2) const {
        MatrixXd L(n() - 1, N());
        for (int j = 0; j < N(); ++j) {
            y1(j) = solve_y1(Y2.col(j), y1(j));
            VectorXd y(n());
            y(0) = y1(j);
            y.tail(n() - 1) = Y2.col(j);
            VectorXd Pf = st->P * problem->f.eval(xb0 + st->Q * y, 0.0, 0.0);
            L.col(j) = Pf.tail(n() - 1) - Lam * Y2.col(j);
        }
        CubicSpline lsp(tau, L);
        MatrixXd newY2(n() - 1, N());
        MatrixXd Lp = Lam.topLeftCorner(p(), p());
        MatrixXd Lm = Lam.bottomRightCorner(q(), q());
        // Plus block: decaying tail integral, accumulated toward the anchor.
        VectorXd I = VectorXd::Zero(p());
        newY2.col(N() - 1).head(p()) = -I;
        for (int j = N() - 2; j >= 0; --j) {
            double a = tau(j), b = tau(j + 1);
            VectorXd cell = VectorXd::Zero(p());
            for (int m = 0; m < kGL; ++m) {
                double s = a + kGLNode[m] * (b - a);
                MatrixXd E = ((a - s) * Lp).exp();
                cell += kGLWeight[m] * (b - a) * (E * lsp.eval(s).head(p()));
            }
            I = cell + ((a - b) * Lp).exp() * I;
            newY2.col(j).head(p()) = -I;
        }
        // Minus block: forward accumulation from the anchor value.
        VectorXd Jm = c;
        newY2.col(0).tail(q()) = Jm;
        for (int j = 1; j < N(); ++j) {
            double a = tau(j - 1), b = tau(j);
            VectorXd cell = VectorXd::Zero(q());
            for (int m = 0; m < kGL; ++m) {
                double s = a + kGLNode[m] * (b - a);
                MatrixXd E = ((b - s) * Lm).exp();
                cell += kGLWeight[m] * (b - a) * (E * lsp.eval(s).tail(q()));
            }
            Jm = ((b - a) * Lm).exp() * Jm + cell;
            newY2.col(j).tail(q()) = Jm;
        }
        double diff = (newY2 - Y2).cwiseAbs().maxCoeff();
        Y2 = std::move(newY2);
        return diff;
    }
};

Pi0Op make_pi0_op(const BVPProblem& problem, const PencilStructure& st,
                  const SeriesField& reduced, const VectorXd& c02m, const LayerGrid& grid) {
    if (grid.side != Side::Start) throw Error("pi0: start-side grid required");
    if (c02m.size() != st.q) throw Error("pi0: anchor parameter must have q components");
    Pi0Op op;
    op.problem = &problem;
    op.st = &st;
    op.xb0 = reduced.eval(0, 0.0);
    MatrixXd J0 = problem.f.jac(op.xb0, 0.0, 0.0);
    op.Lam = (st.P * J0 * st.Q).bottomRightCorner(problem.n - 1, problem.n - 1);
    op.tau = grid.nodes;
    op.c = c02m;
    op.y1 = VectorXd::Zero(grid.size());
    return op;
}

// Shared state for the leading-order end-layer integral operator, in the
// eigenbasis at t = T.
struct Q0Op {
    const BVPProblem* problem;
    const PencilStructure* st;
    VectorXd xbT;
    MatrixXd Minv; // U^{-1} A(T,0)^{-1}
    MatrixXd Bpp;  // plus-block coefficient (p+1)
    MatrixXd Bmm;  // minus-block coefficient (q)
    VectorXd xi;   // ascending nodes, xi(N-1) = 0
    VectorXd c;    // plus-block anchor value

    int n() const { return problem->n; }
    int pp() const { return st->p + 1; }
    int q() const { return st->q; }
    int N() const { return static_cast<int>(xi.size()); }

    VectorXd forcing(const VectorXd& R) const {
        VectorXd v = Minv * problem->f.eval(xbT + st->U * R, problem->T, 0.0);
        v.head(pp()) -= Bpp * R.head(pp());
        v.tail(q()) -= Bmm * R.tail(q());
        return v;
    }

    double apply(MatrixXd& R) const {
        MatrixXd Mv(n(), N());
        for (int j = 0; j < N(); ++j) Mv.col(j) = forcing(R.col(j));
        CubicSpline msp(xi, Mv);
        MatrixXd newR(n(), N());
        // Plus block: anchor value propagated from xi = 0, minus the decaying
        // correction integral accumulated away from the anchor.
        VectorXd K = VectorXd::Zero(pp());
        newR.col(N() - 1).head(pp()) = c - K;
        for (int j = N() - 2; j >= 0; --j) {
            double a = xi(j), b = xi(j + 1);
            VectorXd cell = VectorXd::Zero(pp());
            for (int m = 0; m < kGL; ++m) {
                double s = a + kGLNode[m] * (b - a);
                cell += kGLWeight[m] * (b - a) * (((a - s) * Bpp).exp() * msp.eval(s).head(pp()));
            }
            K = cell + ((a - b) * Bpp).exp() * K;
            newR.col(j).head(pp()) = (xi(j) * Bpp).exp() * c - K;
        }
        // Minus block: forward accumulation from the truncated tail.
        VectorXd Jm = VectorXd::Zero(q());
        newR.col(0).tail(q()) = Jm;
        for (int j = 1; j < N(); ++j) {
            double a = xi(j - 1), b = xi(j);
            VectorXd cell = VectorXd::Zero(q());
            for (int m = 0; m < kGL; ++m) {
                double s = a + kGLNode[m] * (b - a);
                cell += kGLWeight[m] * (b - a) * (((b - s) * Bmm).exp() * msp.eval(s).tail(q()));
            }
            Jm = ((b - a) * Bmm).exp() * Jm + cell;
            newR.col(j).tail(q()) = Jm;
        }
        double diff = (newR - R).cwiseAbs().maxCoeff();
        R = std::move(newR);
        return diff;
    }
};

Q0Op make_q0_op(const BVPProblem& problem, const PencilStructure& st, const SeriesField& reduced,
                const VectorXd& c0p, const LayerGrid& grid) {
    if (grid.side != Side::End) throw Error("q0: end-side grid required");
    if (c0p.size() != st.p + 1) throw Error("q0: anchor parameter must have p+1 components");
    Q0Op op;
    op.problem = &problem;
    op.st = &st;
    op.xbT = reduced.eval(0, problem.T);
    MatrixXd A_T = eval_A_coeff(problem, problem.T, 0);
    op.Minv = st.U.partialPivLu().solve(A_T.partialPivLu().solve(MatrixXd::Identity(
        problem.n, problem.n)));
    MatrixXd B = op.Minv * problem.f.jac(op.xbT, problem.T, 0.0) * st.U;
    op.Bpp = B.topLeftCorner(st.p + 1, st.p + 1);
    op.Bmm = B.bottomRightCorner(st.q, st.q);
    op.xi = grid.nodes.reverse();
    op.c = c0p;
    return op;
}

template <class Op>
void picard_iterate(Op& op, MatrixXd& state, double tol, const char* what) {
    double prev = std::numeric_limits<double>::infinity();
    for (int it = 0; it < 200; ++it) {
        double diff = op.apply(state);
        double ratio = diff / prev;
        if (diff <= tol) return;
        if (it >= 3 && ratio >= 1.0) throw SolveError(contraction_message(what, it, diff, ratio));
        prev = diff;
    }
    throw SolveError(std::string(what) + ": successive approximation hit the iteration cap");
}

} // namespace

LayerGrid LayerGrid::make(Side side, double extent, int count, double grading) {
    if (count < 4) throw Error("layer grid needs at least 4 nodes");
    if (extent <= 0.0) throw Error("layer grid extent must be positive");
    LayerGrid g;
    g.side = side;
    g.nodes.resize(count);
    double sign = side == Side::Start ? 1.0 : -1.0;
    double denom = std::expm1(grading);
    for (int j = 0; j < count; ++j) {
        double u = static_cast<double>(j) / (count - 1);
        g.nodes(j) = sign * extent * std::expm1(grading * u) / denom;
    }
    return g;
}

LayerGrid default_layer_grid(const PencilStructure& structure, Side side, int count) {
    double rate = side == Side::Start ? structure.alpha_star : structure.beta_star;
    double extent = std::max(40.0 / std::max(rate, 1e-12), 40.0);
    return LayerGrid::make(side, extent, count);
}

LayerSolution::LayerSolution(LayerGrid grid, Eigen::MatrixXd values, Side side, int order,
                             Eigen::VectorXd parameter)
    : grid_(std::move(grid)), values_(std::move(values)), side_(side), order_(order),
      parameter_(std::move(parameter)) {
    if (values_.cols() != grid_.size()) throw Error("layer values do not match the grid");
    if (side_ == Side::Start) {
        spline_ = CubicSpline(grid_.nodes, values_);
    } else {
        spline_ = CubicSpline(grid_.nodes.reverse(), values_.rowwise().reverse());
    }
}

Eigen::VectorXd LayerSolution::eval(double stretched) const {
    if (!spline_.valid()) throw Error("layer solution is empty");
    if (std::abs(stretched) > grid_.extent()) return Eigen::VectorXd::Zero(values_.rows());
    return spline_.eval(stretched);
}

Eigen::VectorXd LayerSolution::deriv(double stretched) const {
    if (!spline_.valid()) throw Error("layer solution is empty");
    if (std::abs(stretched) > grid_.extent()) return Eigen::VectorXd::Zero(values_.rows());
    return spline_.deriv(stretched);
}

void LayerSolution::to_csv(std::ostream& os) const {
    os << "stretched_time,component,value,order,side\n";
    os << std::setprecision(17);
    const char* side = side_ == Side::Start ? "start" : "end";
    for (int j = 0; j < grid_.size(); ++j)
        for (int i = 0; i < values_.rows(); ++i)
            os << grid_.nodes(j) << ',' << i << ',' << values_(i, j) << ',' << order_ << ','
               << side << '\n';
}

Propagator::Propagator(std::function<Eigen::MatrixXd(double)> coeff, int dim_plus, int dim_minus)
    : coeff_(std::move(coeff)), dim_plus_(dim_plus), dim_minus_(dim_minus) {}

Eigen::VectorXd Propagator::apply(Block block, double from, double to,
                                  const Eigen::VectorXd& v) const {
    if (v.size() != dim(block)) throw Error("propagator: state has the wrong block dimension");
    int offset = block == Block::Plus ? 0 : dim_plus_;
    int d = dim(block);
    auto rhs = [&](double t, const VectorXd& y) -> VectorXd {
        return coeff_(t).block(offset, offset, d, d) * y;
    };
    return ode45(rhs, from, to, v);
}

double algebraic_first_component(const BVPProblem& problem, const PencilStructure& structure,
                                 const Eigen::VectorXd& xbar0_at_anchor,
                                 const Eigen::VectorXd& pi02, double tol) {
    double v = 0.0;
    for (int it = 0; it < 80; ++it) {
        VectorXd y(problem.n);
        y(0) = v;
        y.tail(problem.n - 1) = pi02;
        VectorXd x = xbar0_at_anchor + structure.Q * y;
        double F = (structure.P * problem.f.eval(x, 0.0, 0.0))(0);
        if (std::abs(F) <= tol) return v;
        double dF = (structure.P * problem.f.jac(x, 0.0, 0.0) * structure.Q)(0, 0);
        if (std::abs(dF) < 1e-12)
            throw SolveError("first-component solve: degenerate algebraic row");
        v -= F / dF;
    }
    throw SolveError("first-component solve: Newton did not converge");
}

LayerSolution pi0_solve(const BVPProblem& problem, const PencilStructure& structure,
                        const SeriesField& reduced, const Eigen::VectorXd& c02m,
                        const LayerGrid& grid, double tol) {
    Pi0Op op = make_pi0_op(problem, structure, reduced, c02m, grid);
    const int n = problem.n, p = structure.p, q = structure.q, N = grid.size();
    MatrixXd Y2 = MatrixXd::Zero(n - 1, N);
    MatrixXd Lm = op.Lam.bottomRightCorner(q, q);
    for (int j = 0; j < N; ++j) Y2.col(j).tail(q) = (grid.nodes(j) * Lm).exp() * c02m;
    picard_iterate(op, Y2, tol, "layer zero (start)");
    MatrixXd values(n, N);
    for (int j = 0; j < N; ++j) {
        VectorXd y(n);
        y(0) = op.solve_y1(Y2.col(j), op.y1(j));
        y.tail(n - 1) = Y2.col(j);
        values.col(j) = structure.Q * y;
    }
    LayerSolution sol(grid, std::move(values), Side::Start, 0, c02m);
    sol.set_decay(decay_fit(sol));
    return sol;
}

LayerSolution q0_solve(const BVPProblem& problem, const PencilStructure& structure,
                       const SeriesField& reduced, const Eigen::VectorXd& c0p,
                       const LayerGrid& grid, double tol) {
    Q0Op op = make_q0_op(problem, structure, reduced, c0p, grid);
    const int n = problem.n, N = grid.size();
    MatrixXd R = MatrixXd::Zero(n, N);
    for (int j = 0; j < N; ++j) R.col(j).head(structure.p + 1) = (op.xi(j) * op.Bpp).exp() * c0p;
    picard_iterate(op, R, tol, "layer zero (end)");
    // op works in ascending order; storage order puts the anchor first.
    MatrixXd values(n, N);
    for (int j = 0; j < N; ++j) values.col(j) = structure.U * R.col(N - 1 - j);
    LayerSolution sol(grid, std::move(values), Side::End, 0, c0p);
    sol.set_decay(decay_fit(sol));
    return sol;
}

double pi0_fixed_point_residual(const BVPProblem& problem, const PencilStructure& structure,
                                const SeriesField& reduced, const LayerSolution& layer) {
    Pi0Op op = make_pi0_op(problem, structure, reduced, layer.parameter(), layer.grid());
    const int n = problem.n, N = layer.grid().size();
    Eigen::PartialPivLU<MatrixXd> Qlu(structure.Q);
    MatrixXd Y2(n - 1, N);
    for (int j = 0; j < N; ++j) {
        VectorXd y = Qlu.solve(layer.values().col(j));
        op.y1(j) = y(0);
        Y2.col(j) = y.tail(n - 1);
    }
    return op.apply(Y2);
}

double q0_fixed_point_residual(const BVPProblem& problem, const PencilStructure& structure,
                               const SeriesField& reduced, const LayerSolution& layer) {
    Q0Op op = make_q0_op(problem, structure, reduced, layer.parameter(), layer.grid());
    const int n = problem.n, N = layer.grid().size();
    Eigen::PartialPivLU<MatrixXd> Ulu(structure.U);
    MatrixXd R(n, N);
    for (int j = 0; j < N; ++j) R.col(N - 1 - j) = Ulu.solve(layer.values().col(j));
    return op.apply(R);
}

Propagator propagator(const BVPProblem& problem, const PencilStructure& structure,
                      const SeriesField& reduced, Side side, const LayerSolution& layer0) {
    if (layer0.order() != 0) throw Error("propagator: a leading-order layer is required");
    const int n = problem.n;
    if (side == Side::Start) {
        VectorXd xb0 = reduced.eval(0, 0.0);
        MatrixXd P = structure.P, Q = structure.Q;
        auto coeff = [&problem, layer0, xb0, P, Q, n](double tau) -> MatrixXd {
            MatrixXd C = P * problem.f.jac(xb0 + layer0.eval(tau), 0.0, 0.0) * Q;
            double C1 = C(0, 0);
            if (std::abs(C1) < 1e-10)
                throw SolveError("start-layer coefficient: degenerate algebraic pivot");
            return C.block(1, 1, n - 1, n - 1) -
                   C.block(1, 0, n - 1, 1) * C.block(0, 1, 1, n - 1) / C1;
        };
        return Propagator(coeff, structure.p, structure.q);
    }
    VectorXd xbT = reduced.eval(0, problem.T);
    MatrixXd A_T = eval_A_coeff(problem, problem.T, 0);
    MatrixXd Minv =
        structure.U.partialPivLu().solve(A_T.partialPivLu().solve(MatrixXd::Identity(n, n)));
    MatrixXd U = structure.U;
    double T = problem.T;
    auto coeff = [&problem, layer0, xbT, Minv, U, T](double xi) -> MatrixXd {
        return Minv * problem.f.jac(xbT + layer0.eval(xi), T, 0.0) * U;
    };
    return Propagator(coeff, structure.p + 1, structure.q);
}

LayerSolution pik_solve(const BVPProblem& problem, const PencilStructure& structure,
                        const SeriesField& reduced, int k, const Eigen::VectorXd& a_km,
                        const std::vector<LayerSolution>& pi_lower, const LayerGrid& grid,
                        double tol) {
    const int n = problem.n, p = structure.p, q = structure.q, N = grid.size();
    if (k < 1) throw Error("pik_solve: order must be at least 1");
    if (static_cast<int>(pi_lower.size()) < k)
        throw Error("pik_solve: layers 0..k-1 are required");
    if (reduced.orders_filled() < k + 1)
        throw Error("pik_solve: regular terms 0..k are required");
    if (grid.side != Side::Start) throw Error("pik_solve: start-side grid required");
    if (a_km.size() != q) throw Error("pik_solve: anchor parameter must have q components");

    VectorXd xb0 = reduced.eval(0, 0.0);
    const VectorXd& tau = grid.nodes;

    // Inhomogeneity in normalized coordinates: the order-k layer part of f
    // minus the lower-order layer contributions of the eps-dependent matrix.
    MatrixXd Ry(n, N);
    for (int j = 0; j < N; ++j) {
        JetVec Xreg = regular_sum_layer_jet(reduced, true, tau(j), k);
        JetVec Xsum = Xreg;
        for (int i = 0; i < k; ++i) Xsum.coeff(i) += pi_lower[i].eval(tau(j));
        Jet tj(k, 0.0);
        tj[1] = tau(j);
        VectorXd gk = problem.f.eval_jet(Xsum, tj, k).coeff(k) -
                      problem.f.eval_jet(Xreg, tj, k).coeff(k);
        for (int i = 1; i <= k; ++i)
            gk -= eval_A_layer_coeff(problem, 0.0, tau(j), i) * pi_lower[k - i].deriv(tau(j));
        Ry.col(j) = structure.P * gk;
    }
    CubicSpline rsp(tau, Ry);

    auto Cmat = [&](double t) -> MatrixXd {
        return structure.P * problem.f.jac(xb0 + pi_lower[0].eval(t), 0.0, 0.0) * structure.Q;
    };
    {
        double C1 = Cmat(0.0)(0, 0);
        if (std::abs(C1) < 1e-10)
            throw SolveError("pik_solve: degenerate algebraic pivot at the turning point");
    }

    std::vector<double> asc(tau.data(), tau.data() + N);
    std::vector<double> desc(asc.rbegin(), asc.rend());
    MatrixXd Yp = MatrixXd::Zero(p, N), Ym = MatrixXd::Zero(q, N);
    double prev = std::numeric_limits<double>::infinity();
    for (int it = 0; it < 200; ++it) {
        CubicSpline psp(tau, Yp), msp(tau, Ym);
        auto pieces = [&](double t, MatrixXd& G, VectorXd& w) {
            MatrixXd C = Cmat(t);
            double C1 = C(0, 0);
            if (std::abs(C1) < 1e-10)
                throw SolveError("pik_solve: degenerate algebraic pivot inside the layer");
            VectorXd rv = rsp.eval(t);
            G = C.block(1, 1, n - 1, n - 1) -
                C.block(1, 0, n - 1, 1) * C.block(0, 1, 1, n - 1) / C1;
            w = rv.tail(n - 1) - C.block(1, 0, n - 1, 1) * (rv(0) / C1);
        };
        auto rhs_minus = [&](double t, const VectorXd& v) -> VectorXd {
            MatrixXd G;
            VectorXd w;
            pieces(t, G, w);
            return G.bottomRightCorner(q, q) * v + G.bottomLeftCorner(q, p) * psp.eval(t) +
                   w.tail(q);
        };
        auto rhs_plus = [&](double t, const VectorXd& v) -> VectorXd {
            MatrixXd G;
            VectorXd w;
            pieces(t, G, w);
            return G.topLeftCorner(p, p) * v + G.topRightCorner(p, q) * msp.eval(t) + w.head(p);
        };
        MatrixXd newYm = sweep(rhs_minus, asc, a_km);
        MatrixXd newYpDesc = sweep(rhs_plus, desc, VectorXd::Zero(p));
        MatrixXd newYp = newYpDesc.rowwise().reverse();
        double diff = std::max((newYm - Ym).cwiseAbs().maxCoeff(),
                               p > 0 ? (newYp - Yp).cwiseAbs().maxCoeff() : 0.0);
        Ym = std::move(newYm);
        Yp = std::move(newYp);
        if (diff <= tol) break;
        double ratio = diff / prev;
        if (it >= 3 && ratio >= 1.0)
            throw SolveError(contraction_message("order-k start layer", it, diff, ratio));
        if (it == 199)
            throw SolveError("order-k start layer: coupling iteration hit the cap");
        prev = diff;
    }

    MatrixXd values(n, N);
    for (int j = 0; j < N; ++j) {
        MatrixXd C = Cmat(tau(j));
        VectorXd y2(n - 1);
        y2.head(p) = Yp.col(j);
        y2.tail(q) = Ym.col(j);
        double y1 = -((C.block(0, 1, 1, n - 1) * y2)(0) + Ry(0, j)) / C(0, 0);
        VectorXd y(n);
        y(0) = y1;
        y.tail(n - 1) = y2;
        values.col(j) = structure.Q * y;
    }
    LayerSolution sol(grid, std::move(values), Side::Start, k, a_km);
    sol.set_decay(decay_fit(sol));
    return sol;
}

LayerSolution qk_solve(const BVPProblem& problem, const PencilStructure& structure,
                       const SeriesField& reduced, int k, const Eigen::VectorXd& b_kp,
                       const std::vector<LayerSolution>& q_lower, const LayerGrid& grid,
                       double tol) {
    const int n = problem.n, pp = structure.p + 1, q = structure.q, N = grid.size();
    if (k < 1) throw Error("qk_solve: order must be at least 1");
    if (static_cast<int>(q_lower.size()) < k) throw Error("qk_solve: layers 0..k-1 are required");
    if (reduced.orders_filled() < k + 1) throw Error("qk_solve: regular terms 0..k are required");
    if (grid.side != Side::End) throw Error("qk_solve: end-side grid required");
    if (b_kp.size() != pp) throw Error("qk_solve: anchor parameter must have p+1 components");

    VectorXd xbT = reduced.eval(0, problem.T);
    MatrixXd A_T = eval_A_coeff(problem, problem.T, 0);
    MatrixXd Minv =
        structure.U.partialPivLu().solve(A_T.partialPivLu().solve(MatrixXd::Identity(n, n)));

    VectorXd xi_asc = grid.nodes.reverse(); // ascending, ends at 0
    MatrixXd Rw(n, N);                      // forcing in the eigenbasis, ascending order
    for (int j = 0; j < N; ++j) {
        double x = xi_asc(j);
        JetVec Xreg = regular_sum_layer_jet(reduced, false, x, k);
        JetVec Xsum = Xreg;
        for (int i = 0; i < k; ++i) Xsum.coeff(i) += q_lower[i].eval(x);
        Jet tj(k, problem.T);
        tj[1] = x;
        VectorXd hk = problem.f.eval_jet(Xsum, tj, k).coeff(k) -
                      problem.f.eval_jet(Xreg, tj, k).coeff(k);
        for (int i = 1; i <= k; ++i)
            hk -= eval_A_layer_coeff(problem, problem.T, x, i) * q_lower[k - i].deriv(x);
        Rw.col(j) = Minv * hk;
    }
    CubicSpline rsp(xi_asc, Rw);

    auto Fmat = [&](double x) -> MatrixXd {
        return Minv * problem.f.jac(xbT + q_lower[0].eval(x), problem.T, 0.0) * structure.U;
    };

    std::vector<double> asc(xi_asc.data(), xi_asc.data() + N);
    std::vector<double> desc(asc.rbegin(), asc.rend());
    MatrixXd Rp = MatrixXd::Zero(pp, N), Rm = MatrixXd::Zero(q, N); // ascending order
    double prev = std::numeric_limits<double>::infinity();
    for (int it = 0; it < 200; ++it) {
        CubicSpline psp(xi_asc, Rp), msp(xi_asc, Rm);
        auto rhs_plus = [&](double t, const VectorXd& v) -> VectorXd {
            MatrixXd F = Fmat(t);
            return F.topLeftCorner(pp, pp) * v + F.topRightCorner(pp, q) * msp.eval(t) +
                   rsp.eval(t).head(pp);
        };
        auto rhs_minus = [&](double t, const VectorXd& v) -> VectorXd {
            MatrixXd F = Fmat(t);
            return F.bottomRightCorner(q, q) * v + F.bottomLeftCorner(q, pp) * psp.eval(t) +
                   rsp.eval(t).tail(q);
        };
        MatrixXd newRpDesc = sweep(rhs_plus, desc, b_kp);
        MatrixXd newRp = newRpDesc.rowwise().reverse();
        MatrixXd newRm = sweep(rhs_minus, asc, VectorXd::Zero(q));
        double diff = std::max((newRm - Rm).cwiseAbs().maxCoeff(),
                               (newRp - Rp).cwiseAbs().maxCoeff());
        Rp = std::move(newRp);
        Rm = std::move(newRm);
        if (diff <= tol) break;
        double ratio = diff / prev;
        if (it >= 3 && ratio >= 1.0)
            throw SolveError(contraction_message("order-k end layer", it, diff, ratio));
        if (it == 199) throw SolveError("order-k end layer: coupling iteration hit the cap");
        prev = diff;
    }

    MatrixXd values(n, N); // storage order: anchor first
    for (int j = 0; j < N; ++j) {
        VectorXd R(n);
        R.head(pp) = Rp.col(N - 1 - j);
        R.tail(q) = Rm.col(N - 1 - j);
        values.col(j) = structure.U * R;
    }
    LayerSolution sol(grid, std::move(values), Side::End, k, b_kp);
    sol.set_decay(decay_fit(sol));
    return sol;
}

DecayEstimate decay_fit(const LayerSolution& layer) {
    DecayEstimate est;
    const auto& values = layer.values();
    const int N = layer.grid().size();
    Eigen::VectorXd norms(N);
    for (int j = 0; j < N; ++j) norms(j) = values.col(j).norm();
    double anchor = norms(0);
    if (!(anchor > 1e-250)) return est; // identically-zero layer: undefined rate
    std::vector<double> xs, ys;
    int first = -1, last = -1;
    for (int j = 1; j < N; ++j) {
        double rel = norms(j) / anchor;
        if (rel <= 0.1 && rel >= 1e-10 && norms(j) > 0.0) {
            if (first < 0) first = j;
            last = j;
            xs.push_back(std::abs(layer.grid().nodes(j)));
            ys.push_back(std::log(norms(j)));
        }
    }
    if (xs.size() < 3) return est;
    double slope = fit_slope(xs, ys);
    double mean_x = 0, mean_y = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mean_x += xs[i];
        mean_y += ys[i];
    }
    mean_x /= static_cast<double>(xs.size());
    mean_y /= static_cast<double>(xs.size());
    est.defined = true;
    est.rate = -slope;
    est.kappa = std::exp(mean_y - slope * mean_x);
    est.fit_begin = first;
    est.fit_end = last;
    return est;
}

} // namespace spdae
