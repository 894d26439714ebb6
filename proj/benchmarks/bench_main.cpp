#include <benchmark/benchmark.h>

#include <random>

#include "partco/hungarian.hpp"
#include "partco/kmeans.hpp"
#include "partco/losses.hpp"
#include "partco/pca.hpp"
#include "partco/part_labels.hpp"
#include "partco/synth.hpp"

using namespace partco;

namespace {

DenseMatrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    DenseMatrix m(rows, cols);
    for (double& v : m.data()) v = gauss(rng);
    return m;
}

DenseMatrix random_unit_rows(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    DenseMatrix m = random_matrix(rows, cols, seed);
    for (std::size_t i = 0; i < rows; ++i) normalize_inplace(m.row(i));
    return m;
}

}  // namespace

static void BM_PcaTopComponents(benchmark::State& state) {
    const DenseMatrix x = random_matrix(2048, state.range(0), 1);
    for (auto _ : state) {
        auto r = pca_top_components(x, 3, true);
        benchmark::DoNotOptimize(r.eigenvalues.data());
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_PcaTopComponents)->Arg(32)->Arg(64)->Arg(128)->Complexity();

static void BM_KMeans(benchmark::State& state) {
    const DenseMatrix x = random_matrix(state.range(0), 3, 2);
    for (auto _ : state) {
        auto r = kmeans(x, 8, 7);
        benchmark::DoNotOptimize(r.inertia);
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_KMeans)->Range(1 << 10, 1 << 14)->Complexity();

static void BM_HungarianMax(benchmark::State& state) {
    const std::size_t k = state.range(0);
    DenseMatrix profit = random_matrix(k, k, 3);
    for (auto _ : state) {
        auto a = hungarian_max(profit);
        benchmark::DoNotOptimize(a.total_profit);
    }
    state.SetComplexityN(k);
}
BENCHMARK(BM_HungarianMax)->Arg(16)->Arg(64)->Arg(256)->Complexity();

static void BM_RepContrastive(benchmark::State& state) {
    const std::size_t b = state.range(0);
    const DenseMatrix z = random_unit_rows(b, 128, 4);
    const DenseMatrix zp = random_unit_rows(b, 128, 5);
    for (auto _ : state) {
        auto r = rep_contrastive_unsup(z, zp, 0.07);
        benchmark::DoNotOptimize(r.value);
    }
}
BENCHMARK(BM_RepContrastive)->Arg(64)->Arg(128)->Arg(256);

static void BM_PartContrastive(benchmark::State& state) {
    const std::size_t entries = state.range(0);
    const DenseMatrix h = random_unit_rows(entries, 128, 6);
    std::vector<PartKey> keys(entries);
    for (std::size_t i = 0; i < entries; ++i)
        keys[i] = {i / 4, static_cast<std::uint32_t>(1 + i % 4), static_cast<int>(i % 10)};
    for (auto _ : state) {
        auto r = part_contrastive_sup(h, keys, 0.07);
        benchmark::DoNotOptimize(r.value);
    }
}
BENCHMARK(BM_PartContrastive)->Arg(128)->Arg(512);

static void BM_BuildLabels(benchmark::State& state) {
    SynthConfig config = preset("fine_grained");
    config.num_classes = 8;
    config.old_classes = 4;
    config.images_per_class = 8;
    config.seed = 1;
    const SynthOutput synth = generate(config);
    LabelBuildConfig build_config;
    for (auto _ : state) {
        auto store = build_labels(synth.features, synth.manifest, LabelOrder::First,
                                  build_config, 3, {});
        benchmark::DoNotOptimize(store.levels.front().label_count);
    }
}
BENCHMARK(BM_BuildLabels)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
