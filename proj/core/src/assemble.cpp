#include "spdae/assemble.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <future>
#include <iomanip>
#include <sstream>

#include "spdae/errors.hpp"
#include "spdae/stats.hpp"

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

} // namespace

ExpansionBundle build_expansion(const BVPProblem& problem, const ExpansionOptions& opts) {
    if (opts.order < 0) throw Error("expansion order must be nonnegative");
    SeriesField reduced = solve_reduced(problem, opts.degree);
    auto [structure, report] =
        classify_and_verify(problem, reduced, opts.t_floor, opts.structure_grid);
    if (!report.all_pass()) {
        std::string failed;
        for (const auto& c : report.checks)
            if (c.verdict != Verdict::Pass) failed += (failed.empty() ? "" : ", ") + c.name;
        throw StructureError("structure verification failed: " + failed);
    }

    LayerGrid pi_grid =
        opts.layer_extent > 0.0
            ? LayerGrid::make(Side::Start, opts.layer_extent, opts.layer_nodes)
            : default_layer_grid(structure, Side::Start, opts.layer_nodes);
    LayerGrid q_grid = opts.layer_extent > 0.0
                           ? LayerGrid::make(Side::End, opts.layer_extent, opts.layer_nodes)
                           : default_layer_grid(structure, Side::End, opts.layer_nodes);

    Order0Result o0 = solve_c0(problem, structure, reduced, pi_grid, q_grid, opts.tol);

    ExpansionBundle bundle{problem,
                           opts.order,
                           std::move(reduced),
                           {},
                           {},
                           std::move(o0.constants),
                           std::move(structure),
                           std::move(report)};
    bundle.pi_layers.push_back(std::move(o0.pi0));
    bundle.q_layers.push_back(std::move(o0.q0));

    for (int k = 1; k <= opts.order; ++k) {
        regular_term(problem, bundle.regular, k);
        OrderKResult ok = solve_ck(problem, bundle.structure, bundle.regular, k,
                                   bundle.pi_layers, bundle.q_layers, pi_grid, q_grid, opts.tol);
        bundle.constants.higher.push_back({ok.b_kp, ok.a_km});
        bundle.pi_layers.push_back(std::move(ok.pik));
        bundle.q_layers.push_back(std::move(ok.qk));
    }
    return bundle;
}

Eigen::VectorXd assemble(const ExpansionBundle& bundle, double t, double eps) {
    if (eps <= 0.0) throw Error("assemble: eps must be positive");
    double tau = t / eps;
    double xi = (t - bundle.problem.T) / eps;
    VectorXd x = VectorXd::Zero(bundle.problem.n);
    double pw = 1.0;
    for (int k = 0; k <= bundle.order; ++k) {
        if (k > 0) pw *= eps;
        x += pw * (bundle.regular.eval(k, t) + bundle.pi_layers[k].eval(tau) +
                   bundle.q_layers[k].eval(xi));
    }
    return x;
}

ResidualReport residuals(const ExpansionBundle& bundle, double eps, double delta,
                         int probe_count) {
    if (probe_count < 2) throw Error("residuals: probe count too small");
    const BVPProblem& problem = bundle.problem;
    if (!(delta >= 0.0 && delta < 0.5 * problem.T))
        throw Error("residuals: interior margin must lie in [0, T/2)");
    ResidualReport rep;
    rep.diff_step = eps * 1e-3;
    double h = rep.diff_step;
    for (int i = 0; i < probe_count; ++i) {
        double t = delta + (problem.T - 2.0 * delta) * (i + 0.5) / probe_count;
        VectorXd xp = (assemble(bundle, t + h, eps) - assemble(bundle, t - h, eps)) / (2.0 * h);
        VectorXd x = assemble(bundle, t, eps);
        VectorXd r = eps * (eval_A_full(problem, t, eps) * xp) - problem.f.eval(x, t, eps);
        rep.interior_max = std::max(rep.interior_max, r.cwiseAbs().maxCoeff());
    }
    VectorXd b = problem.bc.M * assemble(bundle, 0.0, eps) +
                 problem.bc.N * assemble(bundle, problem.T, eps) -
                 problem.bc.d(eps, bundle.order);
    rep.boundary_norm = b.cwiseAbs().maxCoeff();
    return rep;
}

void ConvergenceReport::to_csv(std::ostream& os) const {
    os << "epsilon,max_error,interior_residual,boundary_residual\n";
    os << std::setprecision(17);
    for (std::size_t i = 0; i < eps.size(); ++i)
        os << eps[i] << ',' << max_error[i] << ',' << interior_residual[i] << ','
           << boundary_residual[i] << '\n';
}

ConvergenceReport convergence_study(const ExpansionBundle& bundle,
                                    const std::vector<double>& eps_list, int probe_count,
                                    const MeshSpec& mesh, double tol) {
    if (eps_list.size() < 2) throw Error("convergence study needs at least two eps values");
    ConvergenceReport rep;
    rep.order = bundle.order;
    rep.eps = eps_list;
    MeshSpec effective = mesh;
    if (effective.layer_factor <= 0.0)
        effective.layer_factor = static_cast<double>(bundle.order) + 2.0;

    auto one = [&](double eps) {
        auto guess = [&bundle, eps](double t) { return assemble(bundle, t, eps); };
        ReferenceSolution ref = reference_solve(bundle.problem, eps, effective, tol, guess);
        double err = 0.0;
        for (int i = 0; i < probe_count; ++i) {
            double t = bundle.problem.T * i / (probe_count - 1);
            int j = ref.nearest_node(t);
            double tj = ref.mesh(j);
            err = std::max(err,
                           (assemble(bundle, tj, eps) - ref.at_node(j)).cwiseAbs().maxCoeff());
        }
        ResidualReport rr = residuals(bundle, eps);
        return std::array<double, 3>{err, rr.interior_max, rr.boundary_norm};
    };

    std::vector<std::future<std::array<double, 3>>> jobs;
    jobs.reserve(eps_list.size());
    for (double eps : eps_list)
        jobs.push_back(std::async(std::launch::async, one, eps));
    for (auto& job : jobs) {
        auto [err, ir, br] = job.get();
        rep.max_error.push_back(err);
        rep.interior_residual.push_back(ir);
        rep.boundary_residual.push_back(br);
    }
    rep.slope = fit_loglog_slope(rep.eps, rep.max_error);
    return rep;
}

} // namespace spdae
