#include <doctest.h>

#include <vector>

#include "spdae/layers.hpp"
#include "spdae/matching.hpp"
#include "spdae/pencil.hpp"
#include "spdae/problem.hpp"
#include "spdae/regular.hpp"

#include "oracles.hpp"

using namespace spdae;

namespace {

struct Fixture {
    BVPProblem problem;
    SeriesField reduced;
    PencilStructure structure;
    LayerGrid pi_grid;
    LayerGrid q_grid;

    explicit Fixture(BVPProblem pb)
        : problem(std::move(pb)), reduced(solve_reduced(problem)) {
        auto [st, report] = classify_and_verify(problem, reduced);
        REQUIRE(report.all_pass());
        structure = st;
        pi_grid = default_layer_grid(structure, Side::Start);
        q_grid = default_layer_grid(structure, Side::End);
    }
};

BVPProblem with_boundary_terms(const Eigen::Vector3d& d0, const Eigen::Vector3d& d1) {
    BVPProblem pb = registry_get("ltp1");
    pb.bc.d_coeff = [d0, d1](int k) {
        if (k == 0) return VectorXd(d0);
        if (k == 1) return VectorXd(d1);
        return VectorXd(VectorXd::Zero(3));
    };
    return pb;
}

Eigen::Vector3d compatible_d0() {
    // d = (x1(T), x2(T), x3(0)) evaluated on the reduced root: no discrepancy.
    return {oracles::s_of(0.5)(0), oracles::s_of(0.5)(1), oracles::s_of(0.0)(2)};
}

} // namespace

TEST_CASE("the matching matrix of the linear problem is the identity") {
    Fixture fx(registry_get("ltp1"));
    MatchingSystem sys = build_matching_system(fx.problem, fx.structure);
    CHECK(sys.m1 == 1);
    CHECK(sys.m2 == 1);
    CHECK(sys.m3 == 1);
    CHECK((sys.D - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(sys.condition >= 1.0);
    CHECK(sys.condition <= 1.0 + 1e-9);
}

TEST_CASE("order-0 matching of the linear problem") {
    Fixture fx(registry_get("ltp1"));
    Order0Result r =
        solve_c0(fx.problem, fx.structure, fx.reduced, fx.pi_grid, fx.q_grid);

    CHECK(std::abs(r.constants.c02m(0) - 0.1) <= 1e-10);
    CHECK(std::abs(r.constants.c0p(0) - 0.1) <= 1e-10);
    CHECK(std::abs(r.constants.c0p(1) - 0.1) <= 1e-10);
    CHECK(r.residual <= 1e-12);
    CHECK(!r.used_newton); // the fixed point converges for the decoupled problem

    // the returned layers carry the solved parameters
    CHECK((r.pi0.parameter() - r.constants.c02m).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
    CHECK((r.q0.parameter() - r.constants.c0p).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("compatible boundary data produces zero layers") {
    Fixture fx(with_boundary_terms(compatible_d0(), Eigen::Vector3d::Zero()));
    Order0Result r =
        solve_c0(fx.problem, fx.structure, fx.reduced, fx.pi_grid, fx.q_grid);
    CHECK(r.constants.c02m.cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(r.constants.c0p.cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(r.pi0.values().cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(r.q0.values().cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("order-0 matching of the nonlinear problem") {
    Fixture fx(registry_get("ntp1"));
    Order0Result r =
        solve_c0(fx.problem, fx.structure, fx.reduced, fx.pi_grid, fx.q_grid);
    // the boundary rows read the layer anchors directly, so the discrepancy
    // 0.1 transfers to every constant even with the nonlinear layer dynamics
    CHECK(std::abs(r.constants.c02m(0) - 0.1) <= 1e-10);
    CHECK(std::abs(r.constants.c0p(0) - 0.1) <= 1e-10);
    CHECK(std::abs(r.constants.c0p(1) - 0.1) <= 1e-10);
    CHECK(r.residual <= 1e-10);
}

TEST_CASE("order-1 matching constants of the linear problem") {
    Fixture fx(registry_get("ltp1"));
    regular_term(fx.problem, fx.reduced, 1);
    Order0Result r0 =
        solve_c0(fx.problem, fx.structure, fx.reduced, fx.pi_grid, fx.q_grid);
    std::vector<LayerSolution> pi_lower = {r0.pi0};
    std::vector<LayerSolution> q_lower = {r0.q0};

    OrderKResult r1 = solve_ck(fx.problem, fx.structure, fx.reduced, 1, pi_lower, q_lower,
                               fx.pi_grid, fx.q_grid);
    // b1 = -xbar1(T) on the end components, a1 = -xbar1_3(0) = 0
    CHECK(std::abs(r1.b_kp(0) + 1.0 / 3.0) <= 1e-9);
    CHECK(std::abs(r1.b_kp(1) - std::exp(-0.5) / 1.5) <= 1e-9);
    CHECK(std::abs(r1.a_km(0)) <= 1e-9);
    CHECK(r1.condition < 1e12);
}

TEST_CASE("order-1 constants respond linearly to boundary perturbations") {
    Eigen::Vector3d delta(0.02, -0.015, 0.03);
    auto constants_for = [&](double scale) {
        Fixture fx(with_boundary_terms(
            Eigen::Vector3d(1.25 + 0.1, std::exp(-0.5) + 0.1, 1.0 + 0.1), scale * delta));
        regular_term(fx.problem, fx.reduced, 1);
        Order0Result r0 =
            solve_c0(fx.problem, fx.structure, fx.reduced, fx.pi_grid, fx.q_grid);
        std::vector<LayerSolution> pi_lower = {r0.pi0};
        std::vector<LayerSolution> q_lower = {r0.q0};
        OrderKResult r1 = solve_ck(fx.problem, fx.structure, fx.reduced, 1, pi_lower,
                                   q_lower, fx.pi_grid, fx.q_grid);
        Eigen::Vector3d c;
        c << r1.b_kp(0), r1.b_kp(1), r1.a_km(0);
        return c;
    };
    Eigen::Vector3d c0 = constants_for(0.0);
    Eigen::Vector3d c1 = constants_for(1.0);
    Eigen::Vector3d c2 = constants_for(2.0);
    CHECK(((c2 - c0) - 2.0 * (c1 - c0)).cwiseAbs().maxCoeff() <= 1e-10);
}
