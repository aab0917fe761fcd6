#include <benchmark/benchmark.h>

#include "mole/data.hpp"
#include "mole/mole_linear.hpp"
#include "mole/model.hpp"
#include "mole/train.hpp"

using namespace mole;

namespace {

Tensor2D random_matrix(int rows, int cols, std::uint64_t seed) {
    Rng rng(seed);
    return Tensor2D::random_uniform(rows, cols, -1.0, 1.0, rng);
}

void BM_Matmul(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const Tensor2D a = random_matrix(n, 64, 1);
    const Tensor2D b = random_matrix(64, 64, 2);
    for (auto _ : state) {
        benchmark::DoNotOptimize(matmul(a, b));
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n) * 64 * 64 * 2);
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256)->Arg(400);

void BM_MoleForwardBatch(benchmark::State& state) {
    const int rows = static_cast<int>(state.range(0));
    Rng rng(3);
    const MoleLinear layer = MoleLinear::init(64, 64, 3, 8, 16.0, rng);
    const Tensor2D x = random_matrix(rows, 64, 4);
    for (auto _ : state) {
        benchmark::DoNotOptimize(layer.forward_batch(x));
    }
}
BENCHMARK(BM_MoleForwardBatch)->Arg(64)->Arg(400);

void BM_MoleBackwardBatch(benchmark::State& state) {
    const int rows = static_cast<int>(state.range(0));
    Rng rng(5);
    const MoleLinear layer = MoleLinear::init(64, 64, 3, 8, 16.0, rng);
    const Tensor2D x = random_matrix(rows, 64, 6);
    const Tensor2D upstream = random_matrix(rows, 64, 7);
    const auto [h, cache] = layer.forward_batch(x);
    for (auto _ : state) {
        benchmark::DoNotOptimize(layer.backward_batch(cache, upstream));
    }
}
BENCHMARK(BM_MoleBackwardBatch)->Arg(64)->Arg(400);

void BM_TrainStep(benchmark::State& state) {
    TinyLM model = TinyLM::init(ModelConfig{}, 42);
    const auto corpus = generate_synthetic_corpus(9, {4, 4, 4, 0.0, 0.0});
    std::vector<EncodedRecord> encoded;
    for (const auto& r : corpus) encoded.push_back(encode_for_training(r, CueMask::full()));
    TrainConfig cfg;
    cfg.seed = 1;
    Trainer trainer(model, cfg);
    std::size_t cursor = 0;
    for (auto _ : state) {
        const EncodedRecord& rec = encoded[cursor];
        cursor = (cursor + 1) % encoded.size();
        benchmark::DoNotOptimize(trainer.sft_step_encoded({rec}));
    }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

void BM_GenerateStep(benchmark::State& state) {
    const TinyLM model = TinyLM::init(ModelConfig{}, 42);
    const auto corpus = generate_synthetic_corpus(10, {2, 0, 0, 0.0, 0.0});
    std::vector<int> prompt;
    prompt.push_back(tok::kBos);
    for (int t : tok::tokenize(assemble_prompt(corpus[0], CueMask::full()))) prompt.push_back(t);
    prompt.push_back(tok::kSep);
    for (auto _ : state) {
        benchmark::DoNotOptimize(model.generate(prompt, 1));
    }
}
BENCHMARK(BM_GenerateStep)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
