// Command-line front end for the boundary-function expansion library.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>

#include "spdae/assemble.hpp"
#include "spdae/errors.hpp"
#include "spdae/matching.hpp"
#include "spdae/pencil.hpp"
#include "spdae/problem.hpp"

namespace {

using namespace spdae;

struct Options {
    std::string problem = "ltp1";
    int order = 1;
    std::vector<double> eps;
    double tol = 1e-10;
    int grid_nodes = 400;
    double tau_max = 0.0;
    std::string out;
    std::string format = "text";
};

std::ostream& open_out(const Options& opt, std::ofstream& file) {
    if (opt.out.empty()) return std::cout;
    file.open(opt.out);
    if (!file) throw Error("cannot open output file: " + opt.out);
    return file;
}

ExpansionOptions expansion_options(const Options& opt) {
    ExpansionOptions eo;
    eo.order = opt.order;
    eo.layer_nodes = opt.grid_nodes;
    eo.layer_extent = opt.tau_max;
    eo.tol = opt.tol;
    return eo;
}

int run_list() {
    for (const auto& name : registry_list()) std::cout << name << '\n';
    return 0;
}

int run_analyze(const Options& opt) {
    BVPProblem problem = registry_get(opt.problem);
    SeriesField reduced = solve_reduced(problem);
    auto [structure, report] = classify_and_verify(problem, reduced);
    std::ofstream file;
    std::ostream& os = open_out(opt, file);
    if (opt.format == "csv") {
        report.to_csv(os);
    } else {
        report.to_text(os);
        os << std::setprecision(17);
        os << "p = " << structure.p << ", q = " << structure.q << '\n';
        os << "eta1 = " << structure.eta1.real() << ", eta2 = " << structure.eta2.real() << '\n';
        os << "alpha_star = " << structure.alpha_star
           << ", beta_star = " << structure.beta_star << '\n';
    }
    return report.all_pass() ? 0 : 1;
}

int run_expand(const Options& opt) {
    BVPProblem problem = registry_get(opt.problem);
    ExpansionBundle bundle = build_expansion(problem, expansion_options(opt));
    if (opt.out.empty()) {
        bundle.constants.to_csv(std::cout);
        return 0;
    }
    std::filesystem::create_directories(opt.out);
    auto write = [&](const std::string& name, auto&& emit) {
        std::filesystem::path path = std::filesystem::path(opt.out) / name;
        std::ofstream f(path);
        if (!f) throw Error("cannot open output file: " + path.string());
        emit(f);
    };
    write("regular.csv", [&](std::ostream& os) { bundle.regular.to_csv(os); });
    write("constants.csv", [&](std::ostream& os) { bundle.constants.to_csv(os); });
    for (int k = 0; k <= bundle.order; ++k) {
        write("layer_start_" + std::to_string(k) + ".csv",
              [&](std::ostream& os) { bundle.pi_layers[k].to_csv(os); });
        write("layer_end_" + std::to_string(k) + ".csv",
              [&](std::ostream& os) { bundle.q_layers[k].to_csv(os); });
    }
    return 0;
}

int run_validate(const Options& opt) {
    BVPProblem problem = registry_get(opt.problem);
    ExpansionBundle bundle = build_expansion(problem, expansion_options(opt));
    std::vector<double> eps = opt.eps;
    if (eps.empty()) eps = {1e-2, 5e-3, 2e-3, 1e-3, 5e-4, 3e-4};
    ConvergenceReport rep = convergence_study(bundle, eps);
    std::ofstream file;
    std::ostream& os = open_out(opt, file);
    if (opt.format == "csv") {
        rep.to_csv(os);
    } else {
        rep.to_csv(os);
        os << std::setprecision(17);
        os << "# order " << rep.order << ", error slope " << rep.slope << '\n';
    }
    return 0;
}

int run_residuals(const Options& opt) {
    BVPProblem problem = registry_get(opt.problem);
    ExpansionBundle bundle = build_expansion(problem, expansion_options(opt));
    std::vector<double> eps = opt.eps;
    if (eps.empty()) eps = {1e-3};
    std::ofstream file;
    std::ostream& os = open_out(opt, file);
    os << "epsilon,interior_residual,boundary_residual\n" << std::setprecision(17);
    for (double e : eps) {
        ResidualReport rr = residuals(bundle, e);
        os << e << ',' << rr.interior_max << ',' << rr.boundary_norm << '\n';
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Boundary-function expansions for singularly perturbed "
                 "differential-algebraic two-point problems with a turning point"};
    app.require_subcommand(1);

    Options opt;
    auto add_common = [&](CLI::App* sub, bool needs_problem) {
        if (needs_problem) sub->add_option("--problem", opt.problem, "problem name");
        sub->add_option("--order", opt.order, "truncation order l")->check(CLI::NonNegativeNumber);
        sub->add_option("--eps", opt.eps, "perturbation parameter(s), comma separated")
            ->delimiter(',');
        sub->add_option("--tol", opt.tol, "solver tolerance");
        sub->add_option("--grid-nodes", opt.grid_nodes, "layer grid node count");
        sub->add_option("--tau-max", opt.tau_max, "layer truncation in stretched time");
        sub->add_option("--out", opt.out, "output file (output directory for expand)");
        sub->add_option("--format", opt.format, "output format")
            ->check(CLI::IsMember({"text", "csv"}));
    };

    CLI::App* list = app.add_subcommand("list-problems", "list the built-in problems");
    CLI::App* analyze =
        app.add_subcommand("analyze", "verify the turning-point structure conditions");
    add_common(analyze, true);
    CLI::App* expand = app.add_subcommand("expand", "construct the order-l expansion");
    add_common(expand, true);
    CLI::App* validate =
        app.add_subcommand("validate", "compare the expansion against the stiff reference solver");
    add_common(validate, true);
    CLI::App* resid = app.add_subcommand("residuals", "defect of the expansion at fixed eps");
    add_common(resid, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (list->parsed()) return run_list();
        if (analyze->parsed()) return run_analyze(opt);
        if (expand->parsed()) return run_expand(opt);
        if (validate->parsed()) return run_validate(opt);
        if (resid->parsed()) return run_residuals(opt);
    } catch (const NotFoundError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
