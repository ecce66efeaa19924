#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <stdexcept>

#include "rspo/harness.hpp"
#include "rspo/parallel.hpp"
#include "rspo/score.hpp"

using namespace rspo;

TEST_CASE("parallel_for visits every index once and rethrows") {
    set_thread_count(4);
    std::vector<int> hits(1000, 0);
    parallel_for(1000, [&](int i) { hits[static_cast<std::size_t>(i)] += 1; });
    for (int h : hits) CHECK(h == 1);

    std::atomic<int> ran{0};
    CHECK_THROWS_AS(parallel_for(64, [&](int i) {
                        ++ran;
                        if (i == 17) throw std::runtime_error("boom");
                    }),
                    std::runtime_error);
    CHECK(ran.load() >= 1);
}

TEST_CASE("scoring kernel equals the serial reference at any thread count") {
    const Vocab v = Vocab::task_default();
    const DenoiserShape shape{v.size(), 3, 32, 8, 16};
    const DenoiserParams ref = DenoiserParams::random_uniform(shape, 1, 0.05);
    const DenoiserParams cur = DenoiserParams::random_uniform(shape, 2, 0.05);
    const std::vector<Token> prompt = encode_text("3+4=?", v);
    Rng rng(10);
    std::vector<std::vector<Token>> completions(24, std::vector<Token>(16));
    for (auto& c : completions)
        for (Token& t : c) t = static_cast<Token>(rng.below(static_cast<std::uint64_t>(v.output_size())));
    std::vector<ScoreItem> items;
    for (std::size_t i = 0; i < completions.size(); ++i) items.push_back({prompt, completions[i], Rng(5).fork(i)});

    const auto serial = score_batch_serial(cur, ref, items, ScoreOptions{});
    for (int threads : {1, 2, 4, 7}) {
        set_thread_count(threads);
        const auto par = score_batch(cur, ref, items, ScoreOptions{});
        for (std::size_t i = 0; i < par.size(); ++i) {
            CHECK(par[i].delta == serial[i].delta);
            CHECK(par[i].grad == serial[i].grad);
        }
    }
}

TEST_CASE("rollout kernel equals the serial reference at any thread count") {
    const Vocab v = Vocab::task_default();
    const DenoiserShape shape{v.size(), 3, 32, 8, 16};
    const DenoiserParams p = DenoiserParams::random_uniform(shape, 3, 0.5);
    const FeatureDenoiser model(p);
    const std::vector<Token> prompt = encode_text("1,2,3=6", v);
    const DecodeConfig cfg{16, 8, 2, 0.9};
    const auto serial = sample_completion_group_serial(model, prompt, 12, cfg, v.mask_id(), Rng(4));
    for (int threads : {1, 3, 8}) {
        set_thread_count(threads);
        CHECK(sample_completion_group(model, prompt, 12, cfg, v.mask_id(), Rng(4)) == serial);
    }
}

TEST_CASE("training metrics do not depend on the thread count") {
    RunConfig cfg = default_config(TaskKind::arith);
    cfg.groups_per_batch = 3;
    cfg.eval_prompts = 4;
    cfg.sampled_eval_prompts = 4;
    const Environment env = make_environment(cfg);
    std::vector<std::string> reference;
    for (int threads : {1, 4}) {
        set_thread_count(threads);
        TrainState st = init_train_state(cfg, env.vocab);
        std::vector<std::string> lines;
        for (int s = 0; s < 5; ++s) lines.push_back(metrics_json_line(train_step(st, cfg, env)));
        if (reference.empty()) reference = lines;
        else CHECK(lines == reference);
    }
}
