#include "regcl/dataset.hpp"
#include "regcl/merging.hpp"
#include "regcl/model.hpp"
#include "regcl/rng.hpp"
#include "regcl/training.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace regcl;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> dist;
    Matrix m(rows, cols);
    for (double& v : m.data()) v = dist(gen);
    return m;
}

void BM_Gram(benchmark::State& state) {
    const auto d = static_cast<std::size_t>(state.range(0));
    const Matrix x = random_matrix(512, d, 1);
    for (auto _ : state) benchmark::DoNotOptimize(gram(x));
    state.SetItemsProcessed(state.iterations() * 512);
}
BENCHMARK(BM_Gram)->Arg(16)->Arg(64)->Arg(256);

void BM_SolveSpd(benchmark::State& state) {
    const auto d = static_cast<std::size_t>(state.range(0));
    const GramMatrix g = gram(random_matrix(2 * d, d, 2));
    const Matrix b = random_matrix(d, d, 3);
    for (auto _ : state) benchmark::DoNotOptimize(solve_spd(g.values, b, 1e-8));
}
BENCHMARK(BM_SolveSpd)->Arg(16)->Arg(64)->Arg(256);

void BM_MergePair(benchmark::State& state) {
    const auto d = static_cast<std::size_t>(state.range(0));
    const GramMatrix c1 = gram(random_matrix(2 * d, d, 4)), c2 = gram(random_matrix(2 * d, d, 5));
    const Matrix w1 = random_matrix(d, d, 6), w2 = random_matrix(d, d, 7);
    const MergeConfig cfg;
    for (auto _ : state) benchmark::DoNotOptimize(merge_pair(w1, c1, w2, c2, cfg));
}
BENCHMARK(BM_MergePair)->Arg(64)->Arg(256);

void BM_RegclStep(benchmark::State& state) {
    ToyModelConfig mc;
    const Checkpoint task = fold_adapters(make_toy_model(mc));
    const Matrix x = random_matrix(256, mc.input_dim, 8);
    const GramMap grams = compute_grams(task, x);
    const MergeState first = regcl_step(MergeState{}, task, grams);
    for (auto _ : state) benchmark::DoNotOptimize(regcl_step(first, task, grams));
}
BENCHMARK(BM_RegclStep);

void BM_TrainEpoch(benchmark::State& state) {
    ToyModelConfig mc;
    const Checkpoint w0 = make_toy_model(mc);
    DomainSpec d;
    d.name = "bench";
    d.seed = 9;
    const TaskPair p = gen_domain(d, 128, 1);
    TrainConfig tc;
    tc.epochs = 1;
    const LossConfig lc;
    for (auto _ : state) benchmark::DoNotOptimize(train_task(w0, p.train, tc, lc));
    state.SetItemsProcessed(state.iterations() * 128);
}
BENCHMARK(BM_TrainEpoch)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
