#include <benchmark/benchmark.h>

#include <optional>

#include "bandsel/classify.hpp"
#include "bandsel/dataset.hpp"

using namespace bandsel;

namespace {

const DualBandFeatureSet kSelected{{{510.0, 670.0}, {670.0, 790.0}},
                                   {FeatureMask{Feature::Max, Feature::Argmax}, FeatureMask{Feature::Min, Feature::Argmin}}};

SynthConfig config() {
    SynthConfig cfg;
    cfg.axis = WavelengthAxis::linspace(450.0, 849.0, 400);
    return cfg;
}

Model train(const SynthConfig& cfg, const std::optional<DualBandFeatureSet>& set) {
    const auto ds = generate_synthetic(cfg);
    if (!set) return train_svm(ds.data.as_matrix(), ds.data.labels, cfg.classes);
    Matrix x(static_cast<Eigen::Index>(ds.data.size()), static_cast<Eigen::Index>(set->feature_dim()));
    for (std::size_t i = 0; i < ds.data.size(); ++i) {
        const auto row = assemble_dual(Spectrum(ds.data.spectra[i], ds.data.axis), *set);
        for (std::size_t j = 0; j < row.size(); ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
    }
    return train_svm(x, ds.data.labels, cfg.classes);
}

void run(benchmark::State& state, const std::optional<DualBandFeatureSet>& set) {
    const auto cfg = config();
    const Model model = train(cfg, set);
    const auto sc = generate_synthetic_cube(cfg, 120, 368, 0, 6, 1);
    const PixelMask all(120, 368, true);
    const PixelPipeline pipeline(cfg.axis, set);
    for (auto _ : state) benchmark::DoNotOptimize(classify_pixels(sc.cube, all, pipeline, model));
    state.counters["fps"] = benchmark::Counter(static_cast<double>(state.iterations()), benchmark::Counter::kIsRate);
}

}  // namespace

static void BM_PredictSelectedSvm(benchmark::State& state) { run(state, kSelected); }
BENCHMARK(BM_PredictSelectedSvm)->Unit(benchmark::kMillisecond);

static void BM_PredictFullSpectrumSvm(benchmark::State& state) { run(state, std::nullopt); }
BENCHMARK(BM_PredictFullSpectrumSvm)->Unit(benchmark::kMillisecond)->Iterations(3);

BENCHMARK_MAIN();
