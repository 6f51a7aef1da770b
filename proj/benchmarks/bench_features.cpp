#include <benchmark/benchmark.h>

#include "bandsel/dataset.hpp"
#include "bandsel/features.hpp"

using namespace bandsel;

namespace {

std::vector<double> spectrum(const WavelengthAxis& axis) {
    SynthConfig cfg;
    cfg.axis = axis;
    return synthetic_class_spectrum(cfg, 3);
}

}  // namespace

static void BM_ComputeFeatures(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto axis = WavelengthAxis::linspace(450.0, 850.0, n);
    const auto v = spectrum(axis);
    for (auto _ : state) benchmark::DoNotOptimize(compute_features(v, axis.nm()));
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_ComputeFeatures)->Arg(21)->Arg(161)->Arg(401);

static void BM_MaskedFeaturesNoMedian(benchmark::State& state) {
    const auto axis = WavelengthAxis::linspace(450.0, 850.0, 161);
    const auto v = spectrum(axis);
    const FeatureMask mask{Feature::Max, Feature::Argmax};
    std::vector<double> out(2), scratch(v.size());
    for (auto _ : state) {
        compute_masked_features(v, axis.nm(), mask, out, scratch);
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(BM_MaskedFeaturesNoMedian);

static void BM_DualBandAssembly(benchmark::State& state) {
    const auto axis = WavelengthAxis::linspace(450.0, 849.0, 400);
    const DualBandFeatureSet set{{{510.0, 670.0}, {670.0, 790.0}},
                                 {FeatureMask{Feature::Max, Feature::Argmax}, FeatureMask{Feature::Min, Feature::Argmin}}};
    const FeatureAssembler assembler(axis, set);
    const auto v = spectrum(axis);
    std::vector<float> pixel(v.begin(), v.end());
    std::vector<double> out(assembler.feature_dim());
    for (auto _ : state) {
        assembler.assemble(std::span<const float>(pixel), out);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_DualBandAssembly);

BENCHMARK_MAIN();
