#include <benchmark/benchmark.h>

#include "bandsel/search.hpp"

using namespace bandsel;

namespace {

TrainTest planted() {
    SynthConfig cfg;
    const auto ds = generate_synthetic(cfg);
    const auto s = stratified_split(ds.data.labels, 0.3, 1);
    return {ds.data.subset(s.train), ds.data.subset(s.test)};
}

}  // namespace

static void BM_Enumeration(benchmark::State& state) {
    for (auto _ : state) {
        const auto windows = enumerate_windows(SearchGrid{});
        const auto masks = enumerate_masks();
        std::uint64_t acc = 0;
        for (const auto& w : windows)
            for (const auto& m : masks) acc ^= candidate_seed(0, {w}, {m});
        benchmark::DoNotOptimize(acc);
    }
}
BENCHMARK(BM_Enumeration)->Unit(benchmark::kMillisecond);

static void BM_WindowTable(benchmark::State& state) {
    const auto data = planted();
    for (auto _ : state) benchmark::DoNotOptimize(window_feature_table(data.train, {510.0, 670.0}));
}
BENCHMARK(BM_WindowTable)->Unit(benchmark::kMicrosecond);

static void BM_EvaluateTables(benchmark::State& state) {
    const auto data = planted();
    const auto train = window_feature_table(data.train, {510.0, 670.0});
    const auto test = window_feature_table(data.test, {510.0, 670.0});
    SearchConfig cfg;
    cfg.classifier = static_cast<ClassifierKind>(state.range(0));
    cfg.epochs = 20;
    const std::vector<FeatureMask> mask{FeatureMask{Feature::Max, Feature::Argmax}};
    for (auto _ : state)
        benchmark::DoNotOptimize(evaluate_tables({&train}, {&test}, data.train.labels, data.test.labels,
                                                 data.train.num_classes, mask, cfg));
    state.SetLabel(std::string(classifier_name(cfg.classifier)));
}
BENCHMARK(BM_EvaluateTables)
    ->Arg(static_cast<int>(ClassifierKind::Knn))
    ->Arg(static_cast<int>(ClassifierKind::Svm))
    ->Arg(static_cast<int>(ClassifierKind::Fcn))
    ->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
