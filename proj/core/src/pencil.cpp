#include "spdae/pencil.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <iomanip>
#include <random>

#include "spdae/errors.hpp"
#include "spdae/stats.hpp"

namespace spdae {

namespace {

const char* verdict_name(Verdict v) {
    switch (v) {
        case Verdict::Pass: return "pass";
        case Verdict::Fail: return "fail";
        default: return "untestable";
    }
}

// Sign convention: first entry with non-negligible magnitude made positive.
void normalize_direction(Eigen::VectorXd& v) {
    v.normalize();
    for (int i = 0; i < v.size(); ++i) {
        if (std::abs(v(i)) > 1e-10) {
            if (v(i) < 0) v = -v;
            return;
        }
    }
}

// Null vector of a rank-deficient matrix via SVD; also reports the rank defect.
std::pair<Eigen::VectorXd, int> null_vector(const Eigen::MatrixXd& M, double tol) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeFullV);
    const auto& s = svd.singularValues();
    double scale = s(0) > 0 ? s(0) : 1.0;
    int defect = 0;
    for (int i = 0; i < s.size(); ++i)
        if (s(i) <= tol * scale) ++defect;
    Eigen::VectorXd v = svd.matrixV().col(M.cols() - 1);
    normalize_direction(v);
    return {v, defect};
}

} // namespace

PencilSpectrum pencil_spectrum(const Eigen::MatrixXd& J, const Eigen::MatrixXd& A, double tol) {
    const int n = static_cast<int>(J.rows());
    Eigen::GeneralizedEigenSolver<Eigen::MatrixXd> ges;
    ges.compute(J, A, false);
    double normA = A.norm();
    double normJ = J.norm();
    PencilSpectrum out;
    for (int i = 0; i < n; ++i) {
        std::complex<double> alpha = ges.alphas()(i);
        double beta = ges.betas()(i);
        if (std::abs(beta) < tol * std::max(normA, 1e-300)) {
            if (std::abs(alpha) < tol * std::max(normJ, 1e-300)) {
                // 0/0 pair: probe the determinant to distinguish a singular pencil.
                std::mt19937 rng(12345);
                std::uniform_real_distribution<double> dist(-2.0, 2.0);
                bool all_tiny = true;
                for (int k = 0; k < 8; ++k) {
                    double w = dist(rng);
                    double det = (J - w * A).determinant();
                    if (std::abs(det) > tol * std::pow(normJ + std::abs(w) * normA, n))
                        all_tiny = false;
                }
                if (all_tiny) throw StructureError("singular pencil: det(J - wA) vanishes identically");
            }
            ++out.infinite_count;
        } else {
            out.finite.push_back(alpha / beta);
        }
    }
    std::sort(out.finite.begin(), out.finite.end(),
              [](auto a, auto b) { return a.real() > b.real(); });
    return out;
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> weierstrass_normalize(const Eigen::MatrixXd& A0,
                                                                  const Eigen::MatrixXd& J0,
                                                                  int p, int q) {
    const int n = static_cast<int>(A0.rows());
    const double tol = 1e-8;
    if (p + q != n - 1)
        throw StructureError("weierstrass_normalize: p + q must equal n - 1");

    auto [vinf, defect] = null_vector(A0, tol);
    if (defect != 1)
        throw StructureError("weierstrass_normalize: A(0,0) has rank defect " +
                             std::to_string(defect) + ", expected exactly one infinite divisor");

    PencilSpectrum spec = pencil_spectrum(J0, A0, 1e-10);
    if (spec.infinite_count != 1 || static_cast<int>(spec.finite.size()) != n - 1)
        throw StructureError("weierstrass_normalize: divisor structure mismatch (" +
                             std::to_string(spec.infinite_count) + " infinite divisors)");

    // Cluster finite eigenvalues: first p entries (descending real part) form the
    // eta1 group, the rest the eta2 group.
    auto cluster = [&](int begin, int count) {
        std::complex<double> mean = 0.0;
        for (int i = 0; i < count; ++i) mean += spec.finite[begin + i];
        mean /= static_cast<double>(count);
        for (int i = 0; i < count; ++i)
            if (std::abs(spec.finite[begin + i] - mean) > 1e-6 * (1.0 + std::abs(mean)))
                throw StructureError(
                    "weierstrass_normalize: finite eigenvalues do not split into the declared "
                    "(p, q) multiplicities");
        return mean;
    };
    std::complex<double> eta1 = cluster(0, p);
    std::complex<double> eta2 = cluster(p, q);
    if (std::abs(eta1.imag()) > 1e-8 * (1.0 + std::abs(eta1)) ||
        std::abs(eta2.imag()) > 1e-8 * (1.0 + std::abs(eta2)))
        throw StructureError("weierstrass_normalize: complex eigenvalue pairs are not supported");

    // Jordan chains per group: (J0 - eta A0) v_1 = 0, (J0 - eta A0) v_j = A0 v_{j-1}.
    auto chain = [&](double eta, int m) {
        std::vector<Eigen::VectorXd> vs;
        Eigen::MatrixXd M = J0 - eta * A0;
        auto [v1, d] = null_vector(M, tol);
        if (d < 1) throw StructureError("weierstrass_normalize: lost eigenvector");
        vs.push_back(v1);
        Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(M);
        for (int j = 1; j < m; ++j) {
            Eigen::VectorXd rhs = A0 * vs.back();
            Eigen::VectorXd vj = cod.solve(rhs);
            if ((M * vj - rhs).norm() > tol * (1.0 + rhs.norm()))
                throw StructureError(
                    "weierstrass_normalize: Jordan chain broke off, divisor structure mismatch");
            vs.push_back(vj);
        }
        return vs;
    };
    auto chain1 = chain(eta1.real(), p);
    auto chain2 = chain(eta2.real(), q);

    Eigen::MatrixXd Q(n, n), R(n, n);
    Q.col(0) = vinf;
    R.col(0) = J0 * vinf;
    for (int j = 0; j < p; ++j) {
        Q.col(1 + j) = chain1[j];
        R.col(1 + j) = A0 * chain1[j];
    }
    for (int j = 0; j < q; ++j) {
        Q.col(1 + p + j) = chain2[j];
        R.col(1 + p + j) = A0 * chain2[j];
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(R);
    if (!lu.isInvertible())
        throw StructureError("weierstrass_normalize: degenerate chain basis");
    Eigen::MatrixXd P = lu.inverse();

    // Post-check the normal form.
    Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
    H(0, 0) = 0.0;
    Eigen::MatrixXd Omega = Eigen::MatrixXd::Zero(n, n);
    Omega(0, 0) = 1.0;
    for (int j = 0; j < p; ++j) {
        Omega(1 + j, 1 + j) = eta1.real();
        if (j + 1 < p) Omega(1 + j, 2 + j) = 1.0;
    }
    for (int j = 0; j < q; ++j) {
        Omega(1 + p + j, 1 + p + j) = eta2.real();
        if (j + 1 < q) Omega(1 + p + j, 2 + p + j) = 1.0;
    }
    double scale = 1.0 + J0.norm();
    if ((P * A0 * Q - H).norm() > 1e-9 * scale || (P * J0 * Q - Omega).norm() > 1e-9 * scale)
        throw StructureError("weierstrass_normalize: normal-form residual too large");
    return {P, Q};
}

std::pair<Eigen::MatrixXd, Eigen::VectorXd> diagonalize_at_T(const Eigen::MatrixXd& A_T,
                                                             const Eigen::MatrixXd& J_T,
                                                             double gap_tol) {
    const int n = static_cast<int>(A_T.rows());
    Eigen::FullPivLU<Eigen::MatrixXd> lu(A_T);
    if (!lu.isInvertible())
        throw StructureError("diagonalize_at_T: A(T,0) is singular");
    Eigen::MatrixXd B = lu.solve(J_T);
    Eigen::EigenSolver<Eigen::MatrixXd> es(B);
    double scale = B.norm() + 1.0;
    for (int i = 0; i < n; ++i)
        if (std::abs(es.eigenvalues()(i).imag()) > 1e-8 * scale)
            throw StructureError("diagonalize_at_T: complex eigenvalues are not supported");

    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        return es.eigenvalues()(a).real() > es.eigenvalues()(b).real();
    });
    Eigen::VectorXd W(n);
    Eigen::MatrixXd U(n, n);
    for (int i = 0; i < n; ++i) {
        W(i) = es.eigenvalues()(idx[i]).real();
        Eigen::VectorXd v = es.eigenvectors().col(idx[i]).real();
        if (v.norm() < 1e-8) // complex-rotated representation, fall back to imaginary part
            v = es.eigenvectors().col(idx[i]).imag();
        normalize_direction(v);
        U.col(i) = v;
    }
    for (int i = 0; i + 1 < n; ++i)
        if (W(i) - W(i + 1) < gap_tol * scale)
            throw StructureError("diagonalize_at_T: eigenvalue gap below tolerance at T");
    if ((U.partialPivLu().solve(B * U) - Eigen::MatrixXd(W.asDiagonal())).norm() > 1e-9 * scale)
        throw StructureError("diagonalize_at_T: diagonalization residual too large");
    return {U, W};
}

namespace {

// Pairwise eigenvalue gap of the pencil J(t) - w A(t,0); infinite eigenvalues at
// interior times count as a distinctness failure (gap 0).
double eigenvalue_gap(const BVPProblem& problem, const SeriesField& reduced, double t) {
    Eigen::MatrixXd A = eval_A_coeff(problem, t, 0);
    Eigen::MatrixXd J = problem.f.jac(reduced.eval(0, t), t, 0.0);
    PencilSpectrum s = pencil_spectrum(J, A);
    if (s.infinite_count > 0) return 0.0;
    double gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < s.finite.size(); ++i)
        for (std::size_t j = i + 1; j < s.finite.size(); ++j)
            gap = std::min(gap, std::abs(s.finite[i] - s.finite[j]));
    return gap;
}

double golden_min(const std::function<double(double)>& f, double a, double b) {
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
    double f1 = f(x1), f2 = f(x2);
    for (int it = 0; it < 80; ++it) {
        if (f1 < f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = f(x2);
        }
    }
    return std::min(f1, f2);
}

} // namespace

std::pair<PencilStructure, StructureReport> classify_and_verify(const BVPProblem& problem,
                                                                const SeriesField& reduced,
                                                                double t_floor, int grid_size) {
    const int n = problem.n;
    PencilStructure st;
    StructureReport report;
    report.grid_size = grid_size;
    report.t_floor = t_floor;

    // condition 3: isolated reduced root (nonsingular Jacobian along the root)
    {
        ConditionCheck c{"condition3_isolated_root"};
        double min_det = std::numeric_limits<double>::infinity();
        for (int j = 0; j < reduced.grid().size(); ++j) {
            double t = reduced.grid().node(j);
            double d = std::abs(problem.f.jac(reduced.eval(0, t), t, 0.0).determinant());
            if (d < min_det) {
                min_det = d;
                c.witness_t = t;
            }
        }
        c.witness_value = min_det;
        c.verdict = min_det > 1e-10 ? Verdict::Pass : Verdict::Fail;
        c.detail = "min |det f_x'| along the reduced root";
        report.checks.push_back(c);
    }

    Eigen::MatrixXd A00 = eval_A_coeff(problem, 0.0, 0);
    Eigen::MatrixXd J00 = problem.f.jac(reduced.eval(0, 0.0), 0.0, 0.0);

    // condition 4: det A(0,0) = 0
    {
        ConditionCheck c{"condition4_turning_point"};
        double d = std::abs(A00.determinant());
        c.witness_t = 0.0;
        c.witness_value = d;
        double scale = std::max(1.0, std::pow(A00.norm(), n));
        c.verdict = d <= 1e-9 * scale ? Verdict::Pass : Verdict::Fail;
        c.detail = "|det A(0,0)|";
        report.checks.push_back(c);
    }

    // condition 5: divisor structure at the turning point
    bool structure_ok = false;
    try {
        PencilSpectrum s0 = pencil_spectrum(J00, A00);
        int pos = 0, neg = 0;
        for (auto w : s0.finite) (w.real() > 0 ? pos : neg)++;
        ConditionCheck c{"condition5_divisor_structure"};
        c.witness_t = 0.0;
        c.witness_value = static_cast<double>(s0.infinite_count);
        c.detail = "infinite divisor count (want 1), p + q = n - 1";
        if (s0.infinite_count == 1 && pos + neg == n - 1 && pos >= 1 && neg >= 1) {
            c.verdict = Verdict::Pass;
            st.p = pos;
            st.q = neg;
            std::complex<double> e1 = 0.0, e2 = 0.0;
            for (int i = 0; i < pos; ++i) e1 += s0.finite[i];
            for (int i = pos; i < n - 1; ++i) e2 += s0.finite[i];
            st.eta1 = e1 / static_cast<double>(pos);
            st.eta2 = e2 / static_cast<double>(neg);
            structure_ok = true;
        } else {
            c.verdict = Verdict::Fail;
        }
        report.checks.push_back(c);
    } catch (const StructureError& e) {
        report.checks.push_back(
            {"condition5_divisor_structure", Verdict::Fail, 0.0, 0.0, e.what()});
    }

    // condition 6: sign split of the finite divisors
    {
        ConditionCheck c{"condition6_sign_split"};
        if (structure_ok) {
            c.witness_value = std::min(st.eta1.real(), -st.eta2.real());
            c.verdict = c.witness_value > 0 ? Verdict::Pass : Verdict::Fail;
            c.detail = "min{Re eta1, -Re eta2}";
        }
        report.checks.push_back(c);
    }

    if (structure_ok) {
        auto [P, Q] = weierstrass_normalize(A00, J00, st.p, st.q);
        st.P = P;
        st.Q = Q;
        st.alpha_star = std::min(st.eta1.real(), -st.eta2.real());
    }

    // conditions 7, 8 on [t_floor, T]
    ChebyshevGrid grid(t_floor, problem.T, grid_size - 1);
    {
        ConditionCheck c{"condition7_distinct_eigenvalues"};
        double min_gap = std::numeric_limits<double>::infinity();
        int arg = 0;
        double scale = 0.0;
        for (int j = 0; j < grid.size(); ++j) {
            double t = grid.node(j);
            double g = eigenvalue_gap(problem, reduced, t);
            Eigen::MatrixXd J = problem.f.jac(reduced.eval(0, t), t, 0.0);
            scale = std::max(scale, J.norm());
            if (g < min_gap) {
                min_gap = g;
                arg = j;
            }
        }
        // refine around the grid minimum: collisions between grid nodes must be caught
        double lo = grid.node(std::max(0, arg - 1));
        double hi = grid.node(std::min(grid.size() - 1, arg + 1));
        double refined = golden_min(
            [&](double t) { return eigenvalue_gap(problem, reduced, t); }, lo, hi);
        min_gap = std::min(min_gap, refined);
        c.witness_t = grid.node(arg);
        c.witness_value = min_gap;
        c.verdict = min_gap > 1e-6 * std::max(scale, 1.0) ? Verdict::Pass : Verdict::Fail;
        c.detail = "min pairwise eigenvalue gap on [t_floor, T]";
        report.checks.push_back(c);
    }
    {
        // asymptotic counterpart of condition 7 near the turning point: the fast
        // eigenvalue must blow up like 1/t
        ConditionCheck c{"condition7_turning_growth"};
        std::vector<double> ts, ws;
        for (int j = 0; j < 4 && j < grid.size(); ++j) {
            double t = grid.node(j);
            Eigen::MatrixXd A = eval_A_coeff(problem, t, 0);
            Eigen::MatrixXd J = problem.f.jac(reduced.eval(0, t), t, 0.0);
            PencilSpectrum s = pencil_spectrum(J, A);
            double wmax = 0.0;
            for (auto w : s.finite) wmax = std::max(wmax, std::abs(w));
            ts.push_back(t);
            ws.push_back(wmax);
        }
        double slope = fit_loglog_slope(ts, ws);
        c.witness_t = ts.front();
        c.witness_value = slope;
        c.verdict = (slope > -1.3 && slope < -0.7) ? Verdict::Pass : Verdict::Fail;
        c.detail = "log-log slope of the fast eigenvalue near t = 0 (want -1)";
        report.checks.push_back(c);
    }
    {
        ConditionCheck c{"condition8_dichotomy_signs"};
        double min_margin = std::numeric_limits<double>::infinity();
        bool counts_ok = true;
        for (int j = 0; j < grid.size(); ++j) {
            double t = grid.node(j);
            Eigen::MatrixXd A = eval_A_coeff(problem, t, 0);
            Eigen::MatrixXd J = problem.f.jac(reduced.eval(0, t), t, 0.0);
            PencilSpectrum s = pencil_spectrum(J, A);
            int pos = 0;
            for (auto w : s.finite) {
                if (w.real() > 0) ++pos;
                if (std::abs(w.real()) < min_margin) {
                    min_margin = std::abs(w.real());
                    c.witness_t = t;
                }
            }
            if (structure_ok && pos != st.p + 1) counts_ok = false;
        }
        c.witness_value = min_margin;
        c.verdict = (counts_ok && min_margin > 0 && structure_ok) ? Verdict::Pass : Verdict::Fail;
        c.detail = "p+1 eigenvalues in the right half-plane, rest in the left";
        report.checks.push_back(c);
    }

    // condition 14 on the eps = 0 slice: the vanishing eigenvalue of (f_x')^{-1} A
    {
        ConditionCheck c{"condition14_slow_direction_sign"};
        double min_re = std::numeric_limits<double>::infinity();
        for (int j = 0; j < grid.size(); ++j) {
            double t = grid.node(j);
            Eigen::MatrixXd J = problem.f.jac(reduced.eval(0, t), t, 0.0);
            Eigen::MatrixXd B = J.partialPivLu().solve(eval_A_coeff(problem, t, 0));
            Eigen::EigenSolver<Eigen::MatrixXd> es(B);
            int slow = 0;
            for (int i = 1; i < n; ++i)
                if (std::abs(es.eigenvalues()(i)) < std::abs(es.eigenvalues()(slow))) slow = i;
            double re = es.eigenvalues()(slow).real();
            if (re < min_re) {
                min_re = re;
                c.witness_t = t;
            }
        }
        c.witness_value = min_re;
        c.verdict = min_re > 0 ? Verdict::Pass : Verdict::Fail;
        c.detail = "min Re of the vanishing eigenvalue of (f_x')^{-1} A(t,0)";
        report.checks.push_back(c);
    }

    // t = T diagonalization for the end layer
    {
        Eigen::MatrixXd AT = eval_A_coeff(problem, problem.T, 0);
        Eigen::MatrixXd JT = problem.f.jac(reduced.eval(0, problem.T), problem.T, 0.0);
        auto [U, W] = diagonalize_at_T(AT, JT);
        st.U = U;
        st.W = W;
        st.beta_star = W.cwiseAbs().minCoeff();
    }

    return {st, report};
}

void StructureReport::to_text(std::ostream& os) const {
    os << "structure report (grid " << grid_size << " on [" << t_floor << ", T])\n";
    for (const auto& c : checks) {
        os << "  " << std::left << std::setw(34) << c.name << ' ' << std::setw(10)
           << verdict_name(c.verdict) << " witness_t=" << std::setprecision(6) << c.witness_t
           << " value=" << std::setprecision(9) << c.witness_value;
        if (!c.detail.empty()) os << "  (" << c.detail << ')';
        os << '\n';
    }
}

void StructureReport::to_csv(std::ostream& os) const {
    os << "name,verdict,witness_t,witness_value\n" << std::setprecision(17);
    for (const auto& c : checks)
        os << c.name << ',' << verdict_name(c.verdict) << ',' << c.witness_t << ','
           << c.witness_value << '\n';
}

} // namespace spdae
