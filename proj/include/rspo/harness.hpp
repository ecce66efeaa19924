#pragma once

// Training loop, optimizer, evaluation, checkpoints and ablation runs.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "rspo/config.hpp"
#include "rspo/mdm.hpp"
#include "rspo/objective.hpp"
#include "rspo/tasks.hpp"

namespace rspo {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double eps = 1e-8;
    double weight_decay = 0.0;  // decoupled; 0 gives plain Adam
};

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::int64_t t = 0;

    static AdamState zeros(std::size_t n);
};

// One bias-corrected Adam step. Throws on a non-finite gradient or a size
// mismatch; params and state are untouched in that case.
void adam_update(std::span<double> params, std::span<const double> grads, AdamState& state,
                 const AdamConfig& cfg);

AdamConfig adam_config(const RunConfig& cfg);

// Prompt source plus evaluation sets for one run.
struct Environment {
    Vocab vocab = Vocab::task_default();
    TaskKind kind = TaskKind::arith;
    TaskGenOptions gen;
    RewardSpec reward;
    std::vector<TaskInstance> train_pool;  // sudoku only; other tasks generate on the fly
    std::vector<TaskInstance> eval_set;    // greedy evaluation
    std::vector<TaskInstance> sampled_eval_set;

    TaskInstance sample(Rng& rng) const;
};

Environment make_environment(const RunConfig& cfg);

DenoiserShape model_shape(const RunConfig& cfg, const Vocab& vocab);

struct TrainState {
    DenoiserParams current;
    DenoiserParams reference;  // frozen copy of the initial parameters
    AdamState adam;
    int step = 0;
};

TrainState init_train_state(const RunConfig& cfg, const Vocab& vocab);

struct StepMetrics {
    int step = 0;
    double mean_reward = 0.0;
    double loss = 0.0;
    double grad_norm = 0.0;
    double var_delta = 0.0;
    double batch_mean_offset = 0.0;
    double zero_std_group_ratio = 0.0;
    double sum_centered = 0.0;
    double sum_weights = 0.0;
    double wall_time = 0.0;  // seconds; not part of the deterministic record
};

// Deterministic fields only, fixed key order, shortest round-trip doubles.
std::string metrics_json_line(const StepMetrics& m);

// Everything that went into one update; filled when a trace is passed.
struct StepTrace {
    std::vector<TaskInstance> prompts;
    std::vector<std::vector<Token>> completions;
    std::vector<double> rewards;
    std::vector<double> advantages;
    RelativeScoreBatch batch;
    std::vector<std::vector<double>> score_grads;
    LossOutput loss;
};

class NonFiniteError : public std::runtime_error {
public:
    NonFiniteError(const std::string& msg, StepMetrics record)
        : std::runtime_error(msg), record_(record) {}
    const StepMetrics& record() const { return record_; }

private:
    StepMetrics record_;
};

// Samples prompts, decodes groups, scores, applies one Adam update and
// advances state.step. Throws NonFiniteError before touching the params
// when the loss or gradient is not finite.
StepMetrics train_step(TrainState& state, const RunConfig& cfg, const Environment& env,
                       StepTrace* trace = nullptr);

// Mean reward of one decode per instance; instance i uses rng.fork(i).
double evaluate(const DenoiserParams& params, const Environment& env,
                std::span<const TaskInstance> instances, const DecodeConfig& decode,
                const Rng& rng);

// Training checkpoint: current and reference parameter blocks in the mdm
// format, then step, config hash and the Adam moments.
void save_train_checkpoint(const std::string& path, const TrainState& state,
                           std::uint64_t config_hash, std::uint64_t seed);
TrainState load_train_checkpoint(const std::string& path, std::uint64_t* config_hash = nullptr);

struct RunResult {
    TrainState state;
    nlohmann::json summary;
    std::vector<StepMetrics> metrics;
};

// Runs cfg.steps updates and writes config.json, metrics.jsonl, timing.jsonl,
// ckpt_<step>.bin and summary.json under cfg.out.
RunResult run_experiment(const RunConfig& cfg, std::ostream* log = nullptr);

struct AblationMatrix {
    RunConfig base;
    std::vector<double> lambdas{0.0, 0.01, 1.0};
    std::vector<bool> centering{true, false};
    std::vector<bool> reference{true, false};
};

// {"base": {...config...}, "lambda": [...], "centering": [...], "reference": [...]}
AblationMatrix parse_ablation_matrix(const nlohmann::json& j);
AblationMatrix load_ablation_matrix(const std::string& path);

// One run per grid cell under <base.out>/<cell>; writes <base.out>/ablation.json.
nlohmann::json run_ablation(const AblationMatrix& matrix, std::ostream* log = nullptr);

// Oracle checks at audit scale; prints one line per check, returns the failure count.
int run_audit(std::ostream& out, std::uint64_t seed = 7);

}  // namespace rspo
