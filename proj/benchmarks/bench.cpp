#include <benchmark/benchmark.h>

#include "spdae/assemble.hpp"
#include "spdae/layers.hpp"
#include "spdae/matching.hpp"
#include "spdae/pencil.hpp"
#include "spdae/problem.hpp"
#include "spdae/reference.hpp"
#include "spdae/regular.hpp"

namespace {

using namespace spdae;

struct Fixture {
    BVPProblem problem = registry_get("ltp1");
    SeriesField reduced = solve_reduced(problem);
    PencilStructure structure;
    Fixture() { structure = classify_and_verify(problem, reduced).first; }
};

Fixture& fixture() {
    static Fixture f;
    return f;
}

void BM_ReducedSolve(benchmark::State& state) {
    const BVPProblem& problem = fixture().problem;
    for (auto _ : state) {
        SeriesField s = solve_reduced(problem);
        benchmark::DoNotOptimize(s.eval(0, 0.25));
    }
}
BENCHMARK(BM_ReducedSolve);

void BM_LayerZeroStart(benchmark::State& state) {
    Fixture& f = fixture();
    LayerGrid grid = default_layer_grid(f.structure, Side::Start, 200);
    Eigen::VectorXd c(1);
    c << 0.1;
    for (auto _ : state) {
        LayerSolution sol = pi0_solve(f.problem, f.structure, f.reduced, c, grid);
        benchmark::DoNotOptimize(sol.at_anchor());
    }
}
BENCHMARK(BM_LayerZeroStart);

void BM_ReferenceSolve(benchmark::State& state) {
    Fixture& f = fixture();
    MeshSpec mesh;
    mesh.cells = static_cast<int>(state.range(0));
    for (auto _ : state) {
        ReferenceSolution ref = reference_solve(f.problem, 1e-3, mesh);
        benchmark::DoNotOptimize(ref.residual);
    }
}
BENCHMARK(BM_ReferenceSolve)->Arg(512)->Arg(2048);

void BM_AssembleEval(benchmark::State& state) {
    Fixture& f = fixture();
    ExpansionOptions opts;
    opts.order = 1;
    opts.layer_nodes = 200;
    static ExpansionBundle bundle = build_expansion(f.problem, opts);
    double t = 0.0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(assemble(bundle, t, 1e-3));
        t += 1e-4;
        if (t > bundle.problem.T) t = 0.0;
    }
}
BENCHMARK(BM_AssembleEval);

} // namespace

BENCHMARK_MAIN();
