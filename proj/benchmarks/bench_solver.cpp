#include <benchmark/benchmark.h>

#include "ma2/aux_certificate.hpp"
#include "ma2/ma_solver.hpp"

using namespace ma2;
using solver::ExactSolutionSpec;

namespace {

solver::ProblemSpec exp_radial(int cells) {
    return solver::manufacture(ExactSolutionSpec::exponential_radial(1.0),
                               std::make_shared<const solver::DiscGrid>(1.0, cells));
}

void BM_AssembleResidual(benchmark::State& state) {
    const auto spec = exp_radial(static_cast<int>(state.range(0)));
    const auto u = solver::initial_iterate(spec);
    for (auto _ : state) benchmark::DoNotOptimize(solver::assemble_residual(u, spec));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(u.size()));
}
BENCHMARK(BM_AssembleResidual)->RangeMultiplier(2)->Range(16, 128);

void BM_NewtonSolve(benchmark::State& state) {
    const auto spec = exp_radial(static_cast<int>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(solver::newton_solve(spec));
}
BENCHMARK(BM_NewtonSolve)->RangeMultiplier(2)->Range(16, 64)->Unit(benchmark::kMillisecond);

void BM_Certify(benchmark::State& state) {
    const auto spec = exp_radial(static_cast<int>(state.range(0)));
    const auto sol = solver::newton_solve(spec);
    const auto cfg = aux::AuxConfig::defaults(spec);
    for (auto _ : state) benchmark::DoNotOptimize(aux::certify(sol, spec, cfg));
}
BENCHMARK(BM_Certify)->RangeMultiplier(2)->Range(16, 64)->Unit(benchmark::kMillisecond);

}  // namespace
