#include <doctest.h>

#include <vector>

#include "spdae/problem.hpp"
#include "spdae/regular.hpp"
#include "spdae/stats.hpp"

#include "oracles.hpp"

using namespace spdae;

namespace {

// Minimal problem with f(x, t, eps) = x and a zero matrix family.
BVPProblem trivial_root_problem() {
    BVPProblem pb;
    pb.name = "trivial";
    pb.n = 2;
    pb.T = 1.0;
    pb.A.n = 2;
    pb.A.max_order = 4;
    pb.A.coeff = [](double, int) { return MatrixXd(MatrixXd::Zero(2, 2)); };
    pb.A.t_partial = [](double, int, int) { return MatrixXd(MatrixXd::Zero(2, 2)); };
    pb.f.max_jet_order = 4;
    pb.f.eval = [](const VectorXd& x, double, double) { return x; };
    pb.f.jac = [](const VectorXd& x, double, double) {
        return MatrixXd(MatrixXd::Identity(x.size(), x.size()));
    };
    pb.f.eval_jet = [](const JetVec& x, const Jet&, int) { return x; };
    pb.reduced_guess = [](double) { return VectorXd(Eigen::Vector2d(0.3, -0.2)); };
    return pb;
}

// f(x, t, eps) = x - eps * c, explicit eps dependence.
BVPProblem shifted_root_problem(const Eigen::Vector2d& c) {
    BVPProblem pb = trivial_root_problem();
    pb.f.eval = [c](const VectorXd& x, double, double eps) { return VectorXd(x - eps * c); };
    pb.f.eval_jet = [c](const JetVec& x, const Jet& t, int order) {
        Jet e = Jet::variable(order, 0.0);
        (void)t;
        JetVec out(2, order);
        for (int i = 0; i < 2; ++i) out.set_component(i, x.component(i) - c(i) * e);
        return out;
    };
    return pb;
}

} // namespace

TEST_CASE("reduced solve recovers the known root of the built-in problems") {
    for (const auto& name : registry_list()) {
        BVPProblem pb = registry_get(name);
        SeriesField series = solve_reduced(pb);
        double max_err = 0.0;
        for (int i = 0; i <= 1000; ++i) {
            double t = pb.T * i / 1000.0;
            max_err = std::max(max_err,
                               (series.eval(0, t) - oracles::s_of(t)).cwiseAbs().maxCoeff());
        }
        CHECK_MESSAGE(max_err <= 1e-10, name); // interpolation bound at degree >= 24
        // grid samples themselves are exact to the Newton tolerance
        for (int j = 0; j < series.grid().size(); ++j) {
            double tj = series.grid().nodes()(j);
            CHECK((series.samples(0).col(j) - Eigen::MatrixXd(oracles::s_of(tj)))
                      .cwiseAbs()
                      .maxCoeff() <= 1e-12);
        }
    }
}

TEST_CASE("reduced solve of a linear field with a zero root") {
    BVPProblem pb = trivial_root_problem();
    SeriesField series = solve_reduced(pb);
    for (double t : {0.0, 0.3, 0.99})
        CHECK(series.eval(0, t).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("lower-order eps coefficients of the composed field") {
    SUBCASE("linear eps-independent field has vanishing first coefficient") {
        BVPProblem pb = registry_get("ltp1");
        SeriesField series = solve_reduced(pb);
        for (double t : {0.0, 0.1, 0.25, 0.4, 0.5})
            CHECK(extract_gbar(pb, series, 1, t).cwiseAbs().maxCoeff() <= 1e-13);
    }
    SUBCASE("explicit eps term appears with its sign") {
        Eigen::Vector2d c(2.0, -0.5);
        BVPProblem pb = shifted_root_problem(c);
        SeriesField series = solve_reduced(pb); // root of f(x,t,0) = x is 0
        VectorXd g1 = extract_gbar(pb, series, 1, 0.4);
        CHECK((g1 + c).cwiseAbs().maxCoeff() <= 1e-13);
    }
    SUBCASE("quadratic nonlinearity enters at second order") {
        BVPProblem pb = registry_get("ntp1");
        SeriesField series = solve_reduced(pb);
        regular_term(pb, series, 1);
        for (double t : {0.05, 0.15, 0.25, 0.35, 0.45}) {
            Eigen::Vector3d x1 = oracles::xbar1(t);
            Eigen::Vector3d expect(0.0, 0.25 * x1(1) * x1(1), 0.25 * x1(2) * x1(2));
            CHECK((extract_gbar(pb, series, 2, t) - Eigen::VectorXd(expect))
                      .cwiseAbs()
                      .maxCoeff() <= 1e-9);
        }
    }
}

TEST_CASE("first and second regular corrections match the closed forms") {
    BVPProblem pb = registry_get("ltp1");
    SeriesField series = solve_reduced(pb);
    regular_term(pb, series, 1);
    regular_term(pb, series, 2);
    double e1 = 0.0, e2 = 0.0;
    for (int i = 0; i <= 200; ++i) {
        double t = pb.T * i / 200.0;
        e1 = std::max(e1, (series.eval(1, t) - Eigen::VectorXd(oracles::xbar1(t)))
                              .cwiseAbs()
                              .maxCoeff());
        e2 = std::max(e2, (series.eval(2, t) - Eigen::VectorXd(oracles::xbar2(t)))
                              .cwiseAbs()
                              .maxCoeff());
    }
    CHECK(e1 <= 1e-9);
    CHECK(e2 <= 1e-8);
}

TEST_CASE("zero matrix family gives a vanishing first correction") {
    BVPProblem pb = trivial_root_problem();
    SeriesField series = solve_reduced(pb);
    regular_term(pb, series, 1);
    for (double t : {0.0, 0.5, 1.0})
        CHECK(series.eval(1, t).cwiseAbs().maxCoeff() <= 1e-13);
}

TEST_CASE("doubling the polynomial degree collapses the interpolation error") {
    BVPProblem pb = registry_get("ltp1");
    auto err_at_degree = [&](int degree) {
        SeriesField series = solve_reduced(pb, degree);
        regular_term(pb, series, 1);
        double err = 0.0;
        for (int i = 0; i <= 500; ++i) {
            double t = pb.T * i / 500.0;
            err = std::max(err, (series.eval(1, t) - Eigen::VectorXd(oracles::xbar1(t)))
                                    .cwiseAbs()
                                    .maxCoeff());
        }
        return err;
    };
    double e8 = err_at_degree(8), e16 = err_at_degree(16);
    CHECK(e16 <= std::max(e8 / 1e3, 1e-12));
}

TEST_CASE("regular series alone satisfies the interior equation to the expected order") {
    for (const auto& name : registry_list()) {
        BVPProblem pb = registry_get(name);
        SeriesField series = solve_reduced(pb);
        regular_term(pb, series, 1);
        for (int l : {0, 1}) {
            std::vector<double> eps_list = {1e-2, 3e-3, 1e-3};
            std::vector<double> defects;
            for (double eps : eps_list) {
                double defect = 0.0;
                for (int i = 0; i <= 60; ++i) {
                    double t = 0.1 + (pb.T - 0.2) * i / 60.0;
                    VectorXd x = series.eval(0, t), xp = series.deriv(0, t);
                    if (l >= 1) {
                        x += eps * series.eval(1, t);
                        xp += eps * series.deriv(1, t);
                    }
                    VectorXd r =
                        eps * (eval_A_coeff(pb, t, 0) * xp) - pb.f.eval(x, t, eps);
                    defect = std::max(defect, r.cwiseAbs().maxCoeff());
                }
                defects.push_back(defect);
            }
            CHECK_MESSAGE(fit_loglog_slope(eps_list, defects) >= l + 0.8,
                          name << " l=" << l);
        }
    }
}

TEST_CASE("stretched-ray re-expansion of the regular partial sum") {
    BVPProblem pb = registry_get("ltp1");
    SeriesField series = solve_reduced(pb);
    regular_term(pb, series, 1);
    regular_term(pb, series, 2);
    const double tau = 1.5;
    JetVec jet = regular_sum_layer_jet(series, true, tau, 2);

    Eigen::Vector3d c0 = oracles::s_of(0.0);
    Eigen::Vector3d c1 = tau * oracles::s_prime(0.0) + oracles::xbar1(0.0);
    Eigen::Vector3d spp0(2.0, 1.0, -1.0); // s''(0)
    Eigen::Vector3d c2 =
        0.5 * tau * tau * spp0 + tau * oracles::xbar1_prime(0.0) + oracles::xbar2(0.0);
    CHECK((jet.coeff(0) - Eigen::VectorXd(c0)).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK((jet.coeff(1) - Eigen::VectorXd(c1)).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK((jet.coeff(2) - Eigen::VectorXd(c2)).cwiseAbs().maxCoeff() <= 1e-6);
}
