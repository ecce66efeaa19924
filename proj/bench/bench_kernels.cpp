// OpenMP kernels against their serial references. Arg is the thread count.

#include <benchmark/benchmark.h>

#include "rspo/mdm.hpp"
#include "rspo/parallel.hpp"
#include "rspo/score.hpp"
#include "rspo/tasks.hpp"

using namespace rspo;

namespace {

struct ScoreFixture {
    Vocab v = Vocab::task_default();
    DenoiserShape shape{v.size(), 3, 32, 8, 16};
    DenoiserParams ref = DenoiserParams::random_uniform(shape, 1, 0.05);
    DenoiserParams cur = DenoiserParams::random_uniform(shape, 2, 0.05);
    std::vector<Token> prompt = encode_text("3+4=?", v);
    std::vector<std::vector<Token>> completions;
    std::vector<ScoreItem> items;

    ScoreFixture() {
        Rng rng(10);
        completions.assign(32, std::vector<Token>(16));
        for (auto& c : completions)
            for (Token& t : c) t = static_cast<Token>(rng.below(static_cast<std::uint64_t>(v.output_size())));
        for (std::size_t i = 0; i < completions.size(); ++i) items.push_back({prompt, completions[i], Rng(5).fork(i)});
    }
};

const ScoreFixture& score_fixture() {
    static const ScoreFixture f;
    return f;
}

void BM_ScoreSerial(benchmark::State& state) {
    const auto& f = score_fixture();
    for (auto _ : state) benchmark::DoNotOptimize(score_batch_serial(f.cur, f.ref, f.items, ScoreOptions{}));
}

void BM_ScoreParallel(benchmark::State& state) {
    const auto& f = score_fixture();
    set_thread_count(static_cast<int>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(score_batch(f.cur, f.ref, f.items, ScoreOptions{}));
}

void BM_RolloutSerial(benchmark::State& state) {
    const auto& f = score_fixture();
    const FeatureDenoiser model(f.cur);
    const DecodeConfig cfg{16, 8, 2, 0.9};
    for (auto _ : state)
        benchmark::DoNotOptimize(sample_completion_group_serial(model, f.prompt, 16, cfg, f.v.mask_id(), Rng(4)));
}

void BM_RolloutParallel(benchmark::State& state) {
    const auto& f = score_fixture();
    const FeatureDenoiser model(f.cur);
    const DecodeConfig cfg{16, 8, 2, 0.9};
    set_thread_count(static_cast<int>(state.range(0)));
    for (auto _ : state)
        benchmark::DoNotOptimize(sample_completion_group(model, f.prompt, 16, cfg, f.v.mask_id(), Rng(4)));
}

}  // namespace

BENCHMARK(BM_ScoreSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ScoreParallel)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RolloutSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RolloutParallel)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
