// Acceptance gate: one pass/fail line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cmath>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <vector>

#include "spdae/assemble.hpp"
#include "spdae/layers.hpp"
#include "spdae/matching.hpp"
#include "spdae/pencil.hpp"
#include "spdae/problem.hpp"
#include "spdae/stats.hpp"

#include "oracles.hpp"

using namespace spdae;

namespace {

int failures = 0;

void report(int id, bool ok, const std::string& what, const std::string& detail) {
    std::cout << (ok ? "PASS" : "FAIL") << " criterion " << id << ": " << what;
    if (!detail.empty()) std::cout << " [" << detail << "]";
    std::cout << std::endl;
    if (!ok) ++failures;
}

template <class Fn>
void criterion(int id, const std::string& what, Fn&& fn) {
    try {
        auto [ok, detail] = fn();
        report(id, ok, what, detail);
    } catch (const std::exception& e) {
        report(id, false, what, std::string("exception: ") + e.what());
    }
}

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(6) << v;
    return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ExpansionBundle make_bundle(const std::string& name, int order) {
    ExpansionOptions o;
    o.order = order;
    return build_expansion(registry_get(name), o);
}

// Slope of the boundary defect, treating a uniformly negligible defect
// (every value at or below 1e-12, far under the eps^{l+1} requirement)
// as passing: the log-log fit is degenerate on exact zeros.
std::pair<bool, std::string> boundary_order_ok(const ConvergenceReport& rep, int l) {
    double worst = 0.0;
    bool positive = true;
    for (double b : rep.boundary_residual) {
        worst = std::max(worst, b);
        if (b <= 0.0) positive = false;
    }
    if (worst <= 1e-12) return {true, "max boundary defect " + fmt(worst) + " (below floor)"};
    if (!positive) return {false, "mixed zero/nonzero boundary defects"};
    double slope = fit_loglog_slope(rep.eps, rep.boundary_residual);
    return {slope >= l + 0.8, "slope " + fmt(slope)};
}

} // namespace

int main() {
    std::vector<double> eps_list = {1e-2, 3e-3, 1e-3, 3e-4};

    ExpansionBundle ltp0 = make_bundle("ltp1", 0);
    ExpansionBundle ltp1 = make_bundle("ltp1", 1);

    ConvergenceReport rep0, rep1;
    double time0 = 0.0, time1 = 0.0;

    criterion(1, "linear problem, order 0: error slope >= 0.9 within 60 s", [&] {
        auto t0 = std::chrono::steady_clock::now();
        rep0 = convergence_study(ltp0, eps_list);
        time0 = seconds_since(t0);
        bool ok = rep0.slope >= 0.9 && time0 <= 60.0;
        return std::pair{ok, "slope " + fmt(rep0.slope) + ", " + fmt(time0) + " s"};
    });

    criterion(2, "linear problem, order 1: error slope >= 1.8 within 120 s", [&] {
        auto t0 = std::chrono::steady_clock::now();
        rep1 = convergence_study(ltp1, eps_list);
        time1 = seconds_since(t0);
        bool ok = rep1.slope >= 1.8 && time1 <= 120.0;
        return std::pair{ok, "slope " + fmt(rep1.slope) + ", " + fmt(time1) + " s"};
    });

    criterion(3, "nonlinear problem, order 0: error slope >= 0.9 within 120 s", [&] {
        auto t0 = std::chrono::steady_clock::now();
        ExpansionBundle ntp0 = make_bundle("ntp1", 0);
        ConvergenceReport rep = convergence_study(ntp0, eps_list);
        double dt = seconds_since(t0);
        bool ok = rep.slope >= 0.9 && dt <= 120.0;
        return std::pair{ok, "slope " + fmt(rep.slope) + ", " + fmt(dt) + " s"};
    });

    criterion(4, "boundary defect order: slope >= l + 0.8 for l in {0, 1}", [&] {
        auto [ok0, d0] = boundary_order_ok(rep0, 0);
        auto [ok1, d1] = boundary_order_ok(rep1, 1);
        return std::pair{ok0 && ok1, "l=0: " + d0 + "; l=1: " + d1};
    });

    criterion(5, "interior defect order: slope >= l + 0.8 for l in {0, 1}", [&] {
        double s0 = fit_loglog_slope(rep0.eps, rep0.interior_residual);
        double s1 = fit_loglog_slope(rep1.eps, rep1.interior_residual);
        bool ok = s0 >= 0.8 && s1 >= 1.8;
        return std::pair{ok, "slopes " + fmt(s0) + ", " + fmt(s1)};
    });

    criterion(6, "layer decay rates match the spectral bounds within 10%", [&] {
        const DecayEstimate& dp = ltp0.pi_layers[0].decay();
        const DecayEstimate& dq = ltp0.q_layers[0].decay();
        bool ok = dp.defined && dq.defined && std::abs(dp.rate - 1.0) <= 0.1 &&
                  std::abs(dq.rate - 1.5) <= 0.15;
        return std::pair{ok, "start rate " + fmt(dp.rate) + " (target 1), end rate " +
                                 fmt(dq.rate) + " (target 1.5)"};
    });

    criterion(7, "pencil classification: p=q=1, eta = +/-1; extended horizon fails", [&] {
        BVPProblem pb = registry_get("ltp1");
        SeriesField reduced = solve_reduced(pb);
        auto [st, rep] = classify_and_verify(pb, reduced);
        bool ok = rep.all_pass() && st.p == 1 && st.q == 1 &&
                  std::abs(st.eta1 - 1.0) <= 1e-10 && std::abs(st.eta2 + 1.0) <= 1e-10;
        BVPProblem long_pb = make_ltp1(2.0);
        SeriesField long_reduced = solve_reduced(long_pb);
        auto [lst, lrep] = classify_and_verify(long_pb, long_reduced);
        (void)lst;
        const ConditionCheck* c = lrep.find("condition7_distinct_eigenvalues");
        bool fails_at_one =
            c != nullptr && c->verdict == Verdict::Fail && std::abs(c->witness_t - 1.0) < 0.2;
        return std::pair{ok && fails_at_one,
                         "eta1 " + fmt(st.eta1.real()) + ", eta2 " + fmt(st.eta2.real()) +
                             "; T=2 distinctness witness t=" +
                             (c ? fmt(c->witness_t) : std::string("missing"))};
    });

    criterion(8, "order-0 matching constants and compatible-data degeneracy", [&] {
        BVPProblem pb = registry_get("ltp1");
        SeriesField reduced = solve_reduced(pb);
        auto [st, srep] = classify_and_verify(pb, reduced);
        (void)srep;
        LayerGrid pg = default_layer_grid(st, Side::Start);
        LayerGrid qg = default_layer_grid(st, Side::End);
        Order0Result r = solve_c0(pb, st, reduced, pg, qg);
        bool constants_ok = std::abs(r.constants.c02m(0) - 0.1) <= 1e-10 &&
                            std::abs(r.constants.c0p(0) - 0.1) <= 1e-10 &&
                            std::abs(r.constants.c0p(1) - 0.1) <= 1e-10 &&
                            r.residual <= 1e-12;
        Eigen::Vector3d d0(oracles::s_of(0.5)(0), oracles::s_of(0.5)(1),
                           oracles::s_of(0.0)(2));
        pb.bc.d_coeff = [d0](int k) {
            return k == 0 ? VectorXd(d0) : VectorXd(VectorXd::Zero(3));
        };
        Order0Result rz = solve_c0(pb, st, reduced, pg, qg);
        bool zero_ok = rz.pi0.values().cwiseAbs().maxCoeff() <= 1e-12 &&
                       rz.q0.values().cwiseAbs().maxCoeff() <= 1e-12;
        return std::pair{constants_ok && zero_ok,
                         "residual " + fmt(r.residual) + ", compatible-data layer sup " +
                             fmt(rz.pi0.values().cwiseAbs().maxCoeff())};
    });

    criterion(9, "reference solver vs quadrature oracle; order-2 self-convergence", [&] {
        BVPProblem pb = registry_get("ltp1");
        MeshSpec spec;
        spec.cells = 4096;
        spec.layer_factor = 3.0;
        double worst = 0.0;
        for (double eps : {1e-2, 1e-3}) {
            auto guess = [&](double t) { return assemble(ltp1, t, eps); };
            ReferenceSolution ref = reference_solve(pb, eps, spec, 1e-10, guess);
            for (int i = 0; i <= 40; ++i) {
                int j = ref.nearest_node(pb.T * i / 40.0);
                worst = std::max(
                    worst, (ref.at_node(j) -
                            Eigen::VectorXd(oracles::ltp1_exact(ref.mesh(j), eps)))
                               .cwiseAbs()
                               .maxCoeff());
            }
        }
        double eps = 1e-2;
        auto guess = [&](double t) { return assemble(ltp1, t, eps); };
        auto err_at = [&](int cells) {
            MeshSpec s2;
            s2.cells = cells;
            s2.layer_factor = 3.0;
            ReferenceSolution ref = reference_solve(pb, eps, s2, 1e-10, guess);
            double e = 0.0;
            for (int i = 0; i <= 40; ++i) {
                int j = ref.nearest_node(pb.T * i / 40.0);
                e = std::max(e, (ref.at_node(j) -
                                 Eigen::VectorXd(oracles::ltp1_exact(ref.mesh(j), eps)))
                                    .cwiseAbs()
                                    .maxCoeff());
            }
            return e;
        };
        double ratio = err_at(512) / err_at(1024);
        bool ok = worst <= 1e-6 && ratio >= 3.0 && ratio <= 5.0;
        return std::pair{ok, "max oracle gap " + fmt(worst) + ", doubling ratio " + fmt(ratio)};
    });

    criterion(10, "layer fixed-point mechanics", [&] {
        BVPProblem pb = registry_get("ltp1");
        SeriesField reduced = solve_reduced(pb);
        auto [st, srep] = classify_and_verify(pb, reduced);
        (void)srep;
        LayerGrid pg = default_layer_grid(st, Side::Start);
        LayerGrid qg = default_layer_grid(st, Side::End);
        const double tol = 1e-10;
        Eigen::VectorXd cm(1);
        cm << 0.1;
        LayerSolution pi0 = pi0_solve(pb, st, reduced, cm, pg, tol);
        LayerSolution q0 = q0_solve(pb, st, reduced, Eigen::Vector2d(0.1, 0.1), qg, tol);
        double rp = pi0_fixed_point_residual(pb, st, reduced, pi0);
        double rq = q0_fixed_point_residual(pb, st, reduced, q0);

        LayerGrid wide = LayerGrid::make(Side::Start, 2.0 * pg.extent());
        LayerSolution pi0w = pi0_solve(pb, st, reduced, cm, wide, tol);
        double trunc_diff = 0.0;
        for (double tau : {0.0, 1.0, 5.0, 20.0, 39.0})
            trunc_diff =
                std::max(trunc_diff, (pi0.eval(tau) - pi0w.eval(tau)).cwiseAbs().maxCoeff());

        Eigen::VectorXd z1 = Eigen::VectorXd::Zero(1);
        double zero_sup = pi0_solve(pb, st, reduced, z1, pg, tol)
                              .values()
                              .cwiseAbs()
                              .maxCoeff();
        zero_sup = std::max(zero_sup, q0_solve(pb, st, reduced, Eigen::Vector2d(0.0, 0.0), qg,
                                               tol)
                                          .values()
                                          .cwiseAbs()
                                          .maxCoeff());
        bool ok = rp <= 10.0 * tol && rq <= 10.0 * tol && trunc_diff <= 1e-8 &&
                  zero_sup <= 1e-12;
        return std::pair{ok, "residuals " + fmt(rp) + "/" + fmt(rq) + ", truncation diff " +
                                 fmt(trunc_diff) + ", zero-data sup " + fmt(zero_sup)};
    });

    criterion(11, "linearity of higher-order layers and propagator cocycle", [&] {
        BVPProblem pb = registry_get("ltp1");
        SeriesField reduced = solve_reduced(pb);
        auto [st, srep] = classify_and_verify(pb, reduced);
        (void)srep;
        regular_term(pb, reduced, 1);
        LayerGrid pg = default_layer_grid(st, Side::Start);
        Eigen::VectorXd cm(1);
        cm << 0.1;
        std::vector<LayerSolution> lower = {pi0_solve(pb, st, reduced, cm, pg)};
        auto solve_a = [&](double a) {
            Eigen::VectorXd av(1);
            av << a;
            return pik_solve(pb, st, reduced, 1, av, lower, pg);
        };
        LayerSolution s0 = solve_a(0.0), su = solve_a(0.06), sv = solve_a(-0.02),
                      suv = solve_a(0.04);
        double superpos = 0.0;
        for (double tau : {0.0, 0.5, 2.0, 6.0, 12.0})
            superpos = std::max(superpos, (suv.eval(tau) + s0.eval(tau) - su.eval(tau) -
                                           sv.eval(tau))
                                              .cwiseAbs()
                                              .maxCoeff());

        Propagator prop = propagator(pb, st, reduced, Side::Start, lower[0]);
        Eigen::VectorXd v(1);
        v << 1.0;
        double cocycle = 0.0;
        for (double mid : {1.0, 3.0, 7.0}) {
            Eigen::VectorXd direct = prop.apply(Propagator::Block::Minus, 0.0, 10.0, v);
            Eigen::VectorXd stepped =
                prop.apply(Propagator::Block::Minus, mid, 10.0,
                           prop.apply(Propagator::Block::Minus, 0.0, mid, v));
            cocycle = std::max(cocycle, (direct - stepped).cwiseAbs().maxCoeff());
        }
        bool ok = superpos <= 1e-9 && cocycle <= 1e-9;
        return std::pair{ok,
                         "superposition " + fmt(superpos) + ", cocycle " + fmt(cocycle)};
    });

    std::cout << (failures == 0 ? "ALL CRITERIA PASSED" : "FAILURES: ")
              << (failures == 0 ? std::string() : std::to_string(failures)) << std::endl;
    return failures == 0 ? 0 : 1;
}
