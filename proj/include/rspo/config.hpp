#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "rspo/mdm.hpp"
#include "rspo/tasks.hpp"

namespace rspo {

struct RunConfig {
    TaskKind task = TaskKind::arith;
    double lambda = 0.01;
    int group_size = 6;
    int k_masks = 2;
    int groups_per_batch = 4;
    int steps = 200;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double adam_eps = 1e-8;
    double weight_decay = 0.0;

    DecodeConfig decode{16, 8, 2, 0.9};
    double eval_temperature = 0.0;

    bool centering = true;
    bool reference = true;
    bool normalize_adv = false;

    std::uint64_t seed = 1;
    std::string out = "runs/default";
    int checkpoint_every = 100;
    int eval_prompts = 64;           // greedy evaluation set size
    int sampled_eval_prompts = 1024;  // rollout-temperature evaluation set size

    int hidden = 32;
    int window = 3;
    int embed = 8;
    double init_scale = 0.05;

    int arith_modulus = 10;
    int countdown_numbers = 3;
    int sudoku_holes = 6;
    int sudoku_pool = 2000;
    RewardMode reward_mode = RewardMode::binary;

    bool debug_checks = false;
    int threads = 0;  // 0 = OpenMP default

    void validate() const;
    bool operator==(const RunConfig&) const = default;
};

// Every recognised key, in serialization order.
const std::vector<std::string>& config_keys();

// Defaults for the given task (decode length and temperature depend on it).
RunConfig default_config(TaskKind task);

nlohmann::json config_to_json(const RunConfig& cfg);

// Flat object; missing keys take the task defaults. Throws ConfigError
// listing every unknown or ill-typed key.
RunConfig config_from_json(const nlohmann::json& j);

RunConfig load_config(const std::string& path);
void save_config(const std::string& path, const RunConfig& cfg);

// Applies RSPO_<KEY> environment variables (e.g. RSPO_LAMBDA=0.1) on top of j.
void apply_env_overrides(nlohmann::json& j);

// Ignores out and threads, which do not affect results.
std::uint64_t config_hash(const RunConfig& cfg);

class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& msg, std::vector<std::string> problems)
        : std::runtime_error(msg), problems_(std::move(problems)) {}
    const std::vector<std::string>& problems() const { return problems_; }

private:
    std::vector<std::string> problems_;
};

}  // namespace rspo
