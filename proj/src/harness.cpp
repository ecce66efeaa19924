#include "rspo/harness.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

#include "rspo/binary_io.hpp"
#include "rspo/parallel.hpp"
#include "rspo/score.hpp"

namespace rspo {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kTrainStream = 0x747261696E;  // "train"
constexpr std::uint64_t kEvalStream = 0x6576616C;     // "eval"
constexpr std::uint64_t kInitStream = 0x696E6974;     // "init"
constexpr std::array<char, 8> kTrainMagic = {'R', 'S', 'P', 'O', 'T', 'R', 'N', '\0'};
constexpr std::uint32_t kTrainVersion = 1;

bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

double mean_of(std::span<const double> v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

std::ofstream open_output(const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    return out;
}

void write_json_file(const fs::path& path, const json& j) {
    std::ofstream out = open_output(path);
    out << j.dump(2) << '\n';
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace

// ---------------------------------------------------------------------------
// Adam

AdamState AdamState::zeros(std::size_t n) {
    AdamState s;
    s.m.assign(n, 0.0);
    s.v.assign(n, 0.0);
    return s;
}

void adam_update(std::span<double> params, std::span<const double> grads, AdamState& state,
                 const AdamConfig& cfg) {
    if (grads.size() != params.size() || state.m.size() != params.size() ||
        state.v.size() != params.size())
        throw std::invalid_argument("adam_update: dimension mismatch");
    if (!all_finite(grads)) throw std::invalid_argument("adam_update: non-finite gradient");
    const std::int64_t t = state.t + 1;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        const double m_hat = state.m[i] / c1;
        const double v_hat = state.v[i] / c2;
        params[i] -= cfg.lr * (m_hat / (std::sqrt(v_hat) + cfg.eps) + cfg.weight_decay * params[i]);
    }
    state.t = t;
}

AdamConfig adam_config(const RunConfig& cfg) {
    return AdamConfig{cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay};
}

// ---------------------------------------------------------------------------
// Environment and state

TaskInstance Environment::sample(Rng& rng) const {
    switch (kind) {
        case TaskKind::arith: return gen_arith(rng, gen.arith_modulus);
        case TaskKind::countdown: return gen_countdown(rng, gen.countdown_numbers);
        case TaskKind::sudoku4:
            if (train_pool.empty()) throw std::logic_error("Environment: empty sudoku training pool");
            return train_pool[rng.below(train_pool.size())];
    }
    throw std::logic_error("Environment: unknown task");
}

Environment make_environment(const RunConfig& cfg) {
    Environment env;
    env.kind = cfg.task;
    env.gen.arith_modulus = cfg.arith_modulus;
    env.gen.countdown_numbers = cfg.countdown_numbers;
    env.gen.sudoku_holes = cfg.sudoku_holes;
    env.reward.mode = cfg.reward_mode;
    const Rng eval_rng(cfg.seed, kEvalStream);

    if (cfg.task == TaskKind::sudoku4) {
        const auto pool = generate_instances(TaskKind::sudoku4, cfg.sudoku_pool, cfg.seed, env.gen);
        std::vector<TaskInstance> test;
        for (const auto& inst : pool) (inst.split == "test" ? test : env.train_pool).push_back(inst);
        if (test.empty() || env.train_pool.empty())
            throw std::runtime_error("make_environment: sudoku pool too small to split");
        for (int i = 0; i < cfg.eval_prompts; ++i)
            env.eval_set.push_back(test[static_cast<std::size_t>(i) % test.size()]);
        for (int i = 0; i < cfg.sampled_eval_prompts; ++i)
            env.sampled_eval_set.push_back(test[static_cast<std::size_t>(i) % test.size()]);
    } else {
        for (int i = 0; i < cfg.eval_prompts; ++i) {
            Rng r = eval_rng.fork(0).fork(static_cast<std::uint64_t>(i));
            env.eval_set.push_back(env.sample(r));
        }
        for (int i = 0; i < cfg.sampled_eval_prompts; ++i) {
            Rng r = eval_rng.fork(1).fork(static_cast<std::uint64_t>(i));
            env.sampled_eval_set.push_back(env.sample(r));
        }
    }
    return env;
}

DenoiserShape model_shape(const RunConfig& cfg, const Vocab& vocab) {
    DenoiserShape s;
    s.vocab_size = vocab.size();
    s.window = cfg.window;
    s.hidden = cfg.hidden;
    s.embed = cfg.embed;
    s.positions = cfg.decode.gen_len;
    return s;
}

TrainState init_train_state(const RunConfig& cfg, const Vocab& vocab) {
    TrainState st;
    const Rng init(cfg.seed, kInitStream);
    st.current = DenoiserParams::random_uniform(model_shape(cfg, vocab), init.key(), cfg.init_scale);
    st.reference = st.current;
    st.adam = AdamState::zeros(st.current.theta.size());
    return st;
}

// ---------------------------------------------------------------------------
// One update

std::string metrics_json_line(const StepMetrics& m) {
    nlohmann::ordered_json j;
    j["step"] = m.step;
    j["mean_reward"] = m.mean_reward;
    j["loss"] = m.loss;
    j["grad_norm"] = m.grad_norm;
    j["var_delta"] = m.var_delta;
    j["batch_mean_offset"] = m.batch_mean_offset;
    j["zero_std_group_ratio"] = m.zero_std_group_ratio;
    j["sum_centered"] = m.sum_centered;
    j["sum_weights"] = m.sum_weights;
    return j.dump();
}

StepMetrics train_step(TrainState& state, const RunConfig& cfg, const Environment& env,
                       StepTrace* trace) {
    const auto start = std::chrono::steady_clock::now();
    const int groups = cfg.groups_per_batch;
    const int G = cfg.group_size;
    const int N = groups * G;
    const Token mask = env.vocab.mask_id();
    const Rng step_rng = Rng(cfg.seed, kTrainStream).fork(static_cast<std::uint64_t>(state.step));

    std::vector<TaskInstance> prompts;
    std::vector<std::vector<Token>> prompt_tokens;
    for (int g = 0; g < groups; ++g) {
        Rng r = step_rng.fork(0).fork(static_cast<std::uint64_t>(g));
        prompts.push_back(env.sample(r));
        prompt_tokens.push_back(encode_text(prompts.back().prompt, env.vocab));
    }

    // Rollouts: completion i of group g uses the stream sample_completion_group
    // would give it, flattened so all N decodes share one parallel loop.
    const FeatureDenoiser model(state.current);
    const Rng rollout_rng = step_rng.fork(1);
    std::vector<std::vector<Token>> completions(static_cast<std::size_t>(N));
    parallel_for(N, [&](int idx) {
        const int g = idx / G;
        Rng r = rollout_rng.fork(static_cast<std::uint64_t>(g)).fork(static_cast<std::uint64_t>(idx % G));
        completions[static_cast<std::size_t>(idx)] =
            decode_semi_ar(model, prompt_tokens[static_cast<std::size_t>(g)], cfg.decode, mask, r).completion;
    });

    std::vector<double> rewards(static_cast<std::size_t>(N));
    for (int idx = 0; idx < N; ++idx)
        rewards[static_cast<std::size_t>(idx)] =
            task_reward(prompts[static_cast<std::size_t>(idx / G)],
                        decode_tokens(completions[static_cast<std::size_t>(idx)], env.vocab), env.reward);

    std::vector<double> advantages;
    advantages.reserve(rewards.size());
    int zero_std = 0;
    const AdvantageConfig adv_cfg{cfg.normalize_adv, 1e-4};
    for (int g = 0; g < groups; ++g) {
        const std::span<const double> group(rewards.data() + static_cast<std::size_t>(g) * G,
                                            static_cast<std::size_t>(G));
        if (is_zero_variance_group(group)) ++zero_std;
        const auto a = group_advantages(group, adv_cfg);
        advantages.insert(advantages.end(), a.begin(), a.end());
    }

    const Rng score_rng = step_rng.fork(2);
    std::vector<ScoreItem> items;
    items.reserve(static_cast<std::size_t>(N));
    for (int idx = 0; idx < N; ++idx)
        items.push_back(ScoreItem{prompt_tokens[static_cast<std::size_t>(idx / G)],
                                  completions[static_cast<std::size_t>(idx)],
                                  score_rng.fork(static_cast<std::uint64_t>(idx))});
    const ScoreOptions score_opts{cfg.k_masks, cfg.reference, true};
    std::vector<CompletionScore> scores = score_batch(state.current, state.reference, items, score_opts);

    std::vector<double> deltas(scores.size());
    std::vector<std::vector<double>> grads(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        deltas[i] = scores[i].delta;
        grads[i] = std::move(scores[i].grad);
    }
    const RelativeScoreBatch batch = cfg.centering ? center_scores(deltas) : uncentered_scores(deltas);
    LossOutput loss = rspo_loss(batch, advantages, cfg.lambda, grads);

    StepMetrics m;
    m.step = state.step;
    m.mean_reward = mean_of(rewards);
    m.loss = loss.loss;
    m.var_delta = var_delta(batch);
    m.batch_mean_offset = batch_mean_offset(batch);
    m.zero_std_group_ratio = static_cast<double>(zero_std) / groups;
    m.sum_centered = std::accumulate(batch.centered.begin(), batch.centered.end(), 0.0);
    m.sum_weights = std::accumulate(loss.weights.begin(), loss.weights.end(), 0.0);
    double sq = 0.0;
    for (double g : loss.gradient) sq += g * g;
    m.grad_norm = std::sqrt(sq);

    if (cfg.debug_checks && cfg.centering) {
        if (std::abs(m.sum_centered) > 1e-12 || std::abs(m.sum_weights) > 1e-12)
            throw std::logic_error("train_step: zero-sum check failed at step " + std::to_string(m.step));
    }
    if (!std::isfinite(m.loss) || !all_finite(loss.gradient)) {
        m.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        throw NonFiniteError("train_step: non-finite loss or gradient at step " + std::to_string(m.step), m);
    }

    adam_update(state.current.theta, loss.gradient, state.adam, adam_config(cfg));
    ++state.step;
    m.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    if (trace) {
        trace->prompts = std::move(prompts);
        trace->completions = std::move(completions);
        trace->rewards = std::move(rewards);
        trace->advantages = std::move(advantages);
        trace->batch = batch;
        trace->score_grads = std::move(grads);
        trace->loss = std::move(loss);
    }
    return m;
}

double evaluate(const DenoiserParams& params, const Environment& env,
                std::span<const TaskInstance> instances, const DecodeConfig& decode, const Rng& rng) {
    if (instances.empty()) return 0.0;
    const FeatureDenoiser model(params);
    std::vector<double> rewards(instances.size());
    parallel_for(static_cast<int>(instances.size()), [&](int i) {
        const TaskInstance& inst = instances[static_cast<std::size_t>(i)];
        Rng r = rng.fork(static_cast<std::uint64_t>(i));
        const auto prompt = encode_text(inst.prompt, env.vocab);
        const auto out = decode_semi_ar(model, prompt, decode, env.vocab.mask_id(), r);
        rewards[static_cast<std::size_t>(i)] = task_reward(inst, decode_tokens(out.completion, env.vocab), env.reward);
    });
    return mean_of(rewards);
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_train_checkpoint(const std::string& path, const TrainState& state,
                           std::uint64_t config_hash, std::uint64_t seed) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_train_checkpoint: cannot open " + path);
    out.write(kTrainMagic.data(), kTrainMagic.size());
    io::write_u32(out, kTrainVersion);
    write_params(out, state.current, seed);
    write_params(out, state.reference, seed);
    io::write_u64(out, static_cast<std::uint64_t>(state.step));
    io::write_u64(out, config_hash);
    io::write_u64(out, static_cast<std::uint64_t>(state.adam.t));
    io::write_u64(out, state.adam.m.size());
    io::write_f64s(out, state.adam.m);
    io::write_f64s(out, state.adam.v);
    if (!out) throw std::runtime_error("save_train_checkpoint: write failed for " + path);
}

TrainState load_train_checkpoint(const std::string& path, std::uint64_t* config_hash) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_train_checkpoint: cannot open " + path);
    try {
        std::array<char, 8> magic{};
        in.read(magic.data(), magic.size());
        if (!in || magic != kTrainMagic) throw std::runtime_error("bad magic");
        const std::uint32_t version = io::read_u32(in);
        if (version != kTrainVersion) throw std::runtime_error("unsupported version " + std::to_string(version));
        TrainState st;
        st.current = read_params(in);
        st.reference = read_params(in);
        if (!(st.current.shape == st.reference.shape))
            throw std::runtime_error("current and reference shapes differ");
        st.step = static_cast<int>(io::read_u64(in));
        const std::uint64_t hash = io::read_u64(in);
        st.adam.t = static_cast<std::int64_t>(io::read_u64(in));
        const std::uint64_t n = io::read_u64(in);
        if (n != st.current.theta.size()) throw std::runtime_error("moment size does not match parameters");
        st.adam.m.resize(n);
        st.adam.v.resize(n);
        io::read_f64s(in, st.adam.m);
        io::read_f64s(in, st.adam.v);
        if (config_hash) *config_hash = hash;
        return st;
    } catch (const std::exception& e) {
        throw std::runtime_error("load_train_checkpoint: " + path + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Runs

RunResult run_experiment(const RunConfig& cfg, std::ostream* log) {
    cfg.validate();
    set_thread_count(cfg.threads);
    const fs::path dir(cfg.out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory " + dir.string() + ": " + ec.message());
    save_config((dir / "config.json").string(), cfg);

    const Environment env = make_environment(cfg);
    RunResult result;
    result.state = init_train_state(cfg, env.vocab);
    TrainState& st = result.state;
    const std::uint64_t hash = config_hash(cfg);
    const std::uint64_t ref_hash_initial = hash_params(st.reference);

    const Rng eval_rng = Rng(cfg.seed, kEvalStream).fork(2);
    DecodeConfig greedy = cfg.decode;
    greedy.temperature = cfg.eval_temperature;
    auto greedy_eval = [&](const DenoiserParams& p) { return evaluate(p, env, env.eval_set, greedy, eval_rng.fork(0)); };
    auto sampled_eval = [&](const DenoiserParams& p) {
        return evaluate(p, env, env.sampled_eval_set, cfg.decode, eval_rng.fork(1));
    };

    const double initial_eval = greedy_eval(st.current);
    const double initial_sampled = sampled_eval(st.current);
    double final_eval = initial_eval;
    double best_eval = initial_eval;
    int best_step = 0;

    std::ofstream metrics = open_output(dir / "metrics.jsonl");
    std::ofstream timing = open_output(dir / "timing.jsonl");
    for (int s = 0; s < cfg.steps; ++s) {
        StepMetrics m;
        try {
            m = train_step(st, cfg, env);
        } catch (const NonFiniteError& e) {
            json err = json::parse(metrics_json_line(e.record()));
            err["error"] = e.what();
            metrics << err.dump() << '\n';
            metrics.flush();
            throw;
        }
        metrics << metrics_json_line(m) << '\n';
        metrics.flush();
        if (!metrics) throw std::runtime_error("write failed for " + (dir / "metrics.jsonl").string());
        timing << json{{"step", m.step}, {"wall_time", m.wall_time}}.dump() << '\n';
        result.metrics.push_back(m);

        if (st.step % cfg.checkpoint_every == 0 || st.step == cfg.steps) {
            save_train_checkpoint((dir / ("ckpt_" + std::to_string(st.step) + ".bin")).string(), st, hash, cfg.seed);
            final_eval = greedy_eval(st.current);
            if (final_eval > best_eval) {
                best_eval = final_eval;
                best_step = st.step;
            }
            if (log)
                *log << "step " << st.step << "  reward " << m.mean_reward << "  eval " << final_eval
                     << "  var_delta " << m.var_delta << '\n';
        }
    }
    if (cfg.steps == 0)
        save_train_checkpoint((dir / "ckpt_0.bin").string(), st, hash, cfg.seed);
    const double final_sampled = cfg.steps == 0 ? initial_sampled : sampled_eval(st.current);

    const std::uint64_t ref_hash_final = hash_params(st.reference);
    std::vector<double> last_var, abs_offsets;
    double max_sum_centered = 0.0, max_sum_weights = 0.0, last_reward = 0.0;
    const std::size_t n = result.metrics.size();
    for (std::size_t i = 0; i < n; ++i) {
        const StepMetrics& m = result.metrics[i];
        if (i + 10 >= n) {
            last_var.push_back(m.var_delta);
            last_reward += m.mean_reward;
        }
        abs_offsets.push_back(std::abs(m.batch_mean_offset));
        max_sum_centered = std::max(max_sum_centered, std::abs(m.sum_centered));
        max_sum_weights = std::max(max_sum_weights, std::abs(m.sum_weights));
    }
    double off_mean = mean_of(abs_offsets), off_sd = 0.0;
    for (double o : abs_offsets) off_sd += (o - off_mean) * (o - off_mean);
    off_sd = abs_offsets.empty() ? 0.0 : std::sqrt(off_sd / static_cast<double>(abs_offsets.size()));

    json& sm = result.summary;
    sm["task"] = std::string(task_name(cfg.task));
    sm["seed"] = cfg.seed;
    sm["steps"] = cfg.steps;
    sm["lambda"] = cfg.lambda;
    sm["objective"] = cfg.lambda == 0.0 ? "aw" : "rspo";
    sm["centering"] = cfg.centering;
    sm["reference"] = cfg.reference;
    sm["normalize_adv"] = cfg.normalize_adv;
    sm["initial_eval_reward"] = initial_eval;
    sm["final_eval_reward"] = final_eval;
    sm["best_eval_reward"] = best_eval;
    sm["best_step"] = best_step;
    sm["initial_sampled_reward"] = initial_sampled;
    sm["final_sampled_reward"] = final_sampled;
    sm["final_train_reward"] = last_var.empty() ? 0.0 : last_reward / static_cast<double>(last_var.size());
    sm["mean_last10_var_delta"] = mean_of(last_var);
    sm["mean_abs_offset"] = off_mean;
    sm["std_abs_offset"] = off_sd;
    sm["min_abs_offset"] = abs_offsets.empty() ? 0.0 : *std::min_element(abs_offsets.begin(), abs_offsets.end());
    sm["max_abs_offset"] = abs_offsets.empty() ? 0.0 : *std::max_element(abs_offsets.begin(), abs_offsets.end());
    sm["max_abs_sum_centered"] = max_sum_centered;
    sm["max_abs_sum_weights"] = max_sum_weights;
    sm["config_hash"] = hex64(hash);
    sm["reference_hash_initial"] = hex64(ref_hash_initial);
    sm["reference_hash_final"] = hex64(ref_hash_final);
    sm["reference_unchanged"] = ref_hash_initial == ref_hash_final;
    write_json_file(dir / "summary.json", sm);
    return result;
}

// ---------------------------------------------------------------------------
// Ablation grid

AblationMatrix parse_ablation_matrix(const json& j) {
    if (!j.is_object()) throw ConfigError("ablation matrix must be a JSON object", {"<root>"});
    std::vector<std::string> problems;
    for (const auto& [key, value] : j.items())
        if (key != "base" && key != "lambda" && key != "centering" && key != "reference")
            problems.push_back("unknown key \"" + key + "\"");
    if (!problems.empty()) throw ConfigError("ablation matrix rejected: " + problems.front(), problems);
    AblationMatrix m;
    if (j.contains("base")) m.base = config_from_json(j.at("base"));
    try {
        if (j.contains("lambda")) m.lambdas = j.at("lambda").get<std::vector<double>>();
        if (j.contains("centering")) m.centering = j.at("centering").get<std::vector<bool>>();
        if (j.contains("reference")) m.reference = j.at("reference").get<std::vector<bool>>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("ablation matrix: ") + e.what(), {"lambda/centering/reference"});
    }
    if (m.lambdas.empty() || m.centering.empty() || m.reference.empty())
        throw ConfigError("ablation matrix: every axis needs at least one value", {"axes"});
    for (double l : m.lambdas)
        if (!(l >= 0.0)) throw ConfigError("ablation matrix: lambda values must be >= 0", {"lambda"});
    return m;
}

AblationMatrix load_ablation_matrix(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_ablation_matrix: cannot open " + path);
    try {
        return parse_ablation_matrix(json::parse(in));
    } catch (const json::parse_error& e) {
        throw std::runtime_error("load_ablation_matrix: " + path + ": " + e.what());
    }
}

json run_ablation(const AblationMatrix& matrix, std::ostream* log) {
    const fs::path root(matrix.base.out);
    json rows = json::array();
    for (double lambda : matrix.lambdas) {
        for (bool centering : matrix.centering) {
            for (bool reference : matrix.reference) {
                RunConfig cfg = matrix.base;
                cfg.lambda = lambda;
                cfg.centering = centering;
                cfg.reference = reference;
                std::ostringstream name;
                name << "lambda_" << lambda << "_centering_" << (centering ? "on" : "off") << "_reference_"
                     << (reference ? "on" : "off");
                cfg.out = (root / name.str()).string();
                if (log) *log << "== " << name.str() << '\n';
                const RunResult r = run_experiment(cfg, log);
                rows.push_back({{"run", name.str()},
                                {"lambda", lambda},
                                {"centering", centering},
                                {"reference", reference},
                                {"final_eval_reward", r.summary["final_eval_reward"]},
                                {"final_sampled_reward", r.summary["final_sampled_reward"]},
                                {"mean_last10_var_delta", r.summary["mean_last10_var_delta"]},
                                {"mean_abs_offset", r.summary["mean_abs_offset"]},
                                {"std_abs_offset", r.summary["std_abs_offset"]}});
            }
        }
    }
    json table = {{"runs", rows}, {"count", rows.size()}};
    std::error_code ec;
    fs::create_directories(root, ec);
    write_json_file(root / "ablation.json", table);
    return table;
}

}  // namespace rspo
