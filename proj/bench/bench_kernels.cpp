// Serial reference vs OpenMP kernels. The second benchmark argument selects the
// implementation: 0 = serial, 1 = OpenMP.

#include <benchmark/benchmark.h>

#include "specmargin/kernels.hpp"
#include "specmargin/pacbayes.hpp"
#include "specmargin/trainer.hpp"

using namespace specmargin;

namespace {

Exec exec_of(const benchmark::State& state) { return state.range(1) == 0 ? Exec::serial : Exec::parallel; }

struct Fixture {
    LabeledDataset data;
    ReluNetwork net;
    ReluNetwork perturbed;
};

Fixture make_fixture(std::size_t m, std::size_t h) {
    TaskSpec task;
    task.m = m;
    TrainConfig cfg;
    cfg.architecture = {2, h, h, 2};
    ReluNetwork net = initialize_network(cfg);
    ReluNetwork perturbed =
        apply_perturbation(net, sample_perturbation(net, 0.01, RngSeed{11}, PerturbationMode::raw).pert);
    return {generate_dataset(task), std::move(net), std::move(perturbed)};
}

void BM_margins(benchmark::State& state) {
    const Fixture f = make_fixture(static_cast<std::size_t>(state.range(0)), 64);
    for (auto _ : state) benchmark::DoNotOptimize(kernels::margins(f.net, f.data, exec_of(state)));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_max_output_change(benchmark::State& state) {
    const Fixture f = make_fixture(static_cast<std::size_t>(state.range(0)), 64);
    for (auto _ : state) {
        benchmark::DoNotOptimize(kernels::max_output_change(f.net, f.perturbed, f.data.inputs(), exec_of(state)));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_gaussian_spectral_norms(benchmark::State& state) {
    const auto count = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) {
        benchmark::DoNotOptimize(kernels::gaussian_spectral_norms(16, 1.0, count, RngSeed{3}, exec_of(state)));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_margins)->ArgsProduct({{1000, 10000}, {0, 1}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_max_output_change)->ArgsProduct({{1000, 10000}, {0, 1}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_gaussian_spectral_norms)->ArgsProduct({{200, 2000}, {0, 1}})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
