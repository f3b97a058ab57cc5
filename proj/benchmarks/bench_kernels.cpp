#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "ma2/eigenperturb.hpp"

using namespace ma2::perturb;

namespace {

SymmetricMatrix spread_diagonal(int n) {
    std::vector<double> d(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) d[static_cast<std::size_t>(i)] = static_cast<double>(n - i);
    return SymmetricMatrix::diagonal(d);
}

SymmetricMatrix random_symmetric(int n) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1, 1);
    Eigen::MatrixXd a(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j <= i; ++j) a(i, j) = a(j, i) = u(rng);
    return SymmetricMatrix(a);
}

void BM_DiagonalKernels(benchmark::State& state) {
    const auto w = spread_diagonal(static_cast<int>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(derivatives_at_diagonal(w, 0));
}
BENCHMARK(BM_DiagonalKernels)->DenseRange(2, 6, 2);

void BM_ConjugateToGeneral(benchmark::State& state) {
    const auto w = random_symmetric(static_cast<int>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(conjugate_to_general(w, 0));
}
BENCHMARK(BM_ConjugateToGeneral)->DenseRange(2, 4, 1);

void BM_FiniteDifferenceOracle(benchmark::State& state) {
    const auto w = spread_diagonal(static_cast<int>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(fd_eigen_derivatives(w, 0, 1e-5));
}
BENCHMARK(BM_FiniteDifferenceOracle)->DenseRange(2, 4, 1);

void BM_Closed2x2(benchmark::State& state) {
    double x = 0.3;
    for (auto _ : state) {
        benchmark::DoNotOptimize(eigen2x2_closed_form(2.0, x, 1.0));
        x += 1e-9;
    }
}
BENCHMARK(BM_Closed2x2);

void BM_EigenDecompose2x2(benchmark::State& state) {
    const auto w = random_symmetric(2);
    for (auto _ : state) benchmark::DoNotOptimize(eigen_decompose(w));
}
BENCHMARK(BM_EigenDecompose2x2);

}  // namespace

BENCHMARK_MAIN();
