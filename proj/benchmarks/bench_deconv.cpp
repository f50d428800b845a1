#include <benchmark/benchmark.h>

#include "deconv/estimator.hpp"
#include "deconv/noise.hpp"
#include "deconv/operator.hpp"
#include "deconv/selector.hpp"
#include "deconv/simulation.hpp"

using namespace deconv;

namespace {

NoiseSpec noise_for(int alpha_tenths) {
    const double alpha = alpha_tenths / 10.0;
    return builtin_noise(alpha == 0.0 ? NoiseLaw::none : NoiseLaw::laplace, 1.0, 1, alpha);
}

}  // namespace

// args: alpha in tenths, bandwidth exponent
static void BM_SolveTable(benchmark::State& state) {
    const NoiseSpec noise = noise_for(static_cast<int>(state.range(0)));
    const KernelSpec spec = make_kernel(2, default_base_smoothness(noise), 1.0, noise);
    const BandwidthVec h({static_cast<int>(state.range(1))});
    std::size_t points = 0;
    for (auto _ : state) {
        auto t = solve_deconv_kernel(spec, noise, h);
        points = t.size();
        benchmark::DoNotOptimize(t.values.data());
    }
    state.counters["lattice"] = static_cast<double>(points);
}
BENCHMARK(BM_SolveTable)->Args({0, -4})->Args({5, -4})->Args({5, -8})->Args({10, -1})->Unit(benchmark::kMillisecond);

static void BM_EstimateAt(benchmark::State& state) {
    const NoiseSpec noise = noise_for(5);
    const KernelSpec spec = make_kernel(2, default_base_smoothness(noise), 1.0, noise);
    const TestDensity f = make_density({"tensor_spline", {1}}, 1);
    const Sample s = sample_model(f, noise, static_cast<std::size_t>(state.range(0)), 1);
    const SampleIndex idx(s);
    const auto table = solve_deconv_kernel(spec, noise, BandwidthVec({static_cast<int>(state.range(1))}));
    const double x[1] = {0.2};
    for (auto _ : state) benchmark::DoNotOptimize(estimate_at(table, idx, x));
}
BENCHMARK(BM_EstimateAt)->Args({1 << 12, -3})->Args({1 << 16, -3})->Args({1 << 16, 0});

static void BM_SelectAt(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    const NoiseSpec noise = noise_for(0);
    const KernelSpec spec = make_kernel(2, 1, 1.0, noise);
    const TestDensity f = make_density({"tensor_spline", {1}}, 1);
    const Sample s = sample_model(f, noise, n, 2);
    const Estimator est(s, default_grid(n, noise.mu_alpha(), GridMode::isotropic), spec, noise, 2.0);
    const double x[1] = {0.2};
    for (auto _ : state) benchmark::DoNotOptimize(est.select_at(x));
    state.counters["grid"] = static_cast<double>(est.grid().size());
}
BENCHMARK(BM_SelectAt)->Arg(1 << 10)->Arg(1 << 14);

static void BM_SelectAnisotropic2D(benchmark::State& state) {
    const NoiseSpec noise = builtin_noise(NoiseLaw::none, 1.0, 2, 0.0);
    const KernelSpec spec = make_kernel(2, 1, 1.0, noise);
    const TestDensity f = make_density({"gauss_mixture", {}}, 2);
    const Sample s = sample_model(f, noise, 4096, 3);
    const Estimator est(s, GridSpec{GridMode::anisotropic, static_cast<int>(state.range(0)), 0}, spec, noise, 2.0);
    const double x[2] = {0.5, -0.5};
    for (auto _ : state) benchmark::DoNotOptimize(est.select_at(x));
    state.counters["grid"] = static_cast<double>(est.grid().size());
}
BENCHMARK(BM_SelectAnisotropic2D)->Arg(-2)->Arg(-4);

BENCHMARK_MAIN();
