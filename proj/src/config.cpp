#include "rspo/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <stdexcept>

namespace rspo {

using nlohmann::json;

namespace {

enum class KeyType { integer, unsigned64, real, boolean, text };

struct KeySpec {
    std::string name;
    KeyType type;
    std::function<json(const RunConfig&)> get;
    std::function<void(RunConfig&, const json&)> set;
};

std::string reward_mode_name(RewardMode m) { return m == RewardMode::binary ? "binary" : "partial"; }

RewardMode parse_reward_mode(const std::string& s) {
    if (s == "binary") return RewardMode::binary;
    if (s == "partial") return RewardMode::partial;
    throw std::invalid_argument("reward_mode must be \"binary\" or \"partial\"");
}

#define RSPO_KEY(name, type, member)                                                  \
    KeySpec {                                                                         \
        #name, type, [](const RunConfig& c) { return json(c.member); },               \
            [](RunConfig& c, const json& v) { v.get_to(c.member); }                   \
    }

const std::vector<KeySpec>& key_specs() {
    static const std::vector<KeySpec> specs = {
        KeySpec{"task", KeyType::text,
                [](const RunConfig& c) { return json(std::string(task_name(c.task))); },
                [](RunConfig& c, const json& v) { c.task = parse_task_kind(v.get<std::string>()); }},
        RSPO_KEY(lambda, KeyType::real, lambda),
        RSPO_KEY(group_size, KeyType::integer, group_size),
        RSPO_KEY(k_masks, KeyType::integer, k_masks),
        RSPO_KEY(groups_per_batch, KeyType::integer, groups_per_batch),
        RSPO_KEY(steps, KeyType::integer, steps),
        RSPO_KEY(lr, KeyType::real, lr),
        RSPO_KEY(beta1, KeyType::real, beta1),
        RSPO_KEY(beta2, KeyType::real, beta2),
        RSPO_KEY(adam_eps, KeyType::real, adam_eps),
        RSPO_KEY(weight_decay, KeyType::real, weight_decay),
        RSPO_KEY(gen_len, KeyType::integer, decode.gen_len),
        RSPO_KEY(block_size, KeyType::integer, decode.block_size),
        RSPO_KEY(unmask_per_step, KeyType::integer, decode.unmask_per_step),
        RSPO_KEY(temperature, KeyType::real, decode.temperature),
        RSPO_KEY(eval_temperature, KeyType::real, eval_temperature),
        RSPO_KEY(centering, KeyType::boolean, centering),
        RSPO_KEY(reference, KeyType::boolean, reference),
        RSPO_KEY(normalize_adv, KeyType::boolean, normalize_adv),
        RSPO_KEY(seed, KeyType::unsigned64, seed),
        RSPO_KEY(out, KeyType::text, out),
        RSPO_KEY(checkpoint_every, KeyType::integer, checkpoint_every),
        RSPO_KEY(eval_prompts, KeyType::integer, eval_prompts),
        RSPO_KEY(sampled_eval_prompts, KeyType::integer, sampled_eval_prompts),
        RSPO_KEY(hidden, KeyType::integer, hidden),
        RSPO_KEY(window, KeyType::integer, window),
        RSPO_KEY(embed, KeyType::integer, embed),
        RSPO_KEY(init_scale, KeyType::real, init_scale),
        RSPO_KEY(arith_modulus, KeyType::integer, arith_modulus),
        RSPO_KEY(countdown_numbers, KeyType::integer, countdown_numbers),
        RSPO_KEY(sudoku_holes, KeyType::integer, sudoku_holes),
        RSPO_KEY(sudoku_pool, KeyType::integer, sudoku_pool),
        KeySpec{"reward_mode", KeyType::text,
                [](const RunConfig& c) { return json(reward_mode_name(c.reward_mode)); },
                [](RunConfig& c, const json& v) { c.reward_mode = parse_reward_mode(v.get<std::string>()); }},
        RSPO_KEY(debug_checks, KeyType::boolean, debug_checks),
        RSPO_KEY(threads, KeyType::integer, threads),
    };
    return specs;
}

#undef RSPO_KEY

bool type_matches(KeyType type, const json& v) {
    switch (type) {
        case KeyType::integer: return v.is_number_integer();
        case KeyType::unsigned64: return v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0);
        case KeyType::real: return v.is_number();
        case KeyType::boolean: return v.is_boolean();
        case KeyType::text: return v.is_string();
    }
    return false;
}

std::size_t edit_distance(const std::string& a, const std::string& b) {
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
        prev.swap(cur);
    }
    return prev[b.size()];
}

std::string suggest(const std::string& key) {
    std::string best;
    std::size_t best_d = 4;
    for (const auto& spec : key_specs()) {
        const std::size_t d = edit_distance(key, spec.name);
        if (d < best_d) {
            best_d = d;
            best = spec.name;
        }
    }
    return best;
}

}  // namespace

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> k;
        for (const auto& s : key_specs()) k.push_back(s.name);
        return k;
    }();
    return keys;
}

RunConfig default_config(TaskKind task) {
    RunConfig c;
    c.task = task;
    switch (task) {
        case TaskKind::arith:
            c.decode = DecodeConfig{16, 8, 2, 0.9};
            c.window = 5;  // reaches the first operand of "a+b=?"
            break;
        case TaskKind::countdown:
            c.decode = DecodeConfig{16, 8, 2, 0.9};
            break;
        case TaskKind::sudoku4:
            c.decode = DecodeConfig{16, 8, 2, 0.3};
            break;
    }
    return c;
}

void RunConfig::validate() const {
    std::vector<std::string> problems;
    auto need = [&](bool ok, const std::string& msg) {
        if (!ok) problems.push_back(msg);
    };
    need(std::isfinite(lambda) && lambda >= 0.0, "lambda must be >= 0");
    need(group_size >= 2, "group_size must be >= 2");
    need(k_masks >= 1, "k_masks must be >= 1");
    need(groups_per_batch >= 1, "groups_per_batch must be >= 1");
    need(steps >= 0, "steps must be >= 0");
    need(lr > 0.0, "lr must be > 0");
    need(beta1 >= 0.0 && beta1 < 1.0, "beta1 must be in [0, 1)");
    need(beta2 >= 0.0 && beta2 < 1.0, "beta2 must be in [0, 1)");
    need(adam_eps > 0.0, "adam_eps must be > 0");
    need(weight_decay >= 0.0, "weight_decay must be >= 0");
    try {
        decode.validate();
    } catch (const std::exception& e) {
        problems.push_back(e.what());
    }
    need(eval_temperature >= 0.0, "eval_temperature must be >= 0");
    need(checkpoint_every >= 1, "checkpoint_every must be >= 1");
    need(eval_prompts >= 1 && sampled_eval_prompts >= 1, "evaluation set sizes must be >= 1");
    need(hidden >= 1 && embed >= 1 && window >= 0, "hidden/embed >= 1, window >= 0");
    need(init_scale >= 0.0, "init_scale must be >= 0");
    need(arith_modulus >= 2 && arith_modulus <= 100, "arith_modulus must be in 2..100");
    need(countdown_numbers >= 3 && countdown_numbers <= 4, "countdown_numbers must be 3 or 4");
    need(sudoku_holes >= 4 && sudoku_holes <= 8, "sudoku_holes must be in 4..8");
    need(sudoku_pool >= 10, "sudoku_pool must be >= 10");
    need(threads >= 0, "threads must be >= 0");
    need(!out.empty(), "out must be a nonempty path");
    if (!problems.empty()) {
        std::string msg = "invalid config:";
        for (const auto& p : problems) msg += " " + p + ";";
        throw ConfigError(msg, problems);
    }
}

json config_to_json(const RunConfig& cfg) {
    json j = json::object();
    for (const auto& spec : key_specs()) j[spec.name] = spec.get(cfg);
    return j;
}

RunConfig config_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config must be a flat JSON object", {"<root>"});
    std::vector<std::string> problems;
    TaskKind task = TaskKind::arith;
    if (j.contains("task")) {
        try {
            task = parse_task_kind(j.at("task").get<std::string>());
        } catch (const std::exception& e) {
            problems.push_back("task: " + std::string(e.what()));
        }
    }
    RunConfig cfg = default_config(task);
    for (const auto& [key, value] : j.items()) {
        const auto& specs = key_specs();
        auto it = std::find_if(specs.begin(), specs.end(), [&](const KeySpec& s) { return s.name == key; });
        if (it == specs.end()) {
            const std::string hint = suggest(key);
            problems.push_back("unknown key \"" + key + "\"" +
                               (hint.empty() ? std::string() : " (did you mean \"" + hint + "\"?)"));
            continue;
        }
        if (!type_matches(it->type, value)) {
            problems.push_back("key \"" + key + "\" has the wrong type");
            continue;
        }
        try {
            it->set(cfg, value);
        } catch (const std::exception& e) {
            problems.push_back("key \"" + key + "\": " + e.what());
        }
    }
    if (!problems.empty()) {
        std::string msg = "config rejected:";
        for (const auto& p : problems) msg += " " + p + ";";
        throw ConfigError(msg, problems);
    }
    cfg.validate();
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_config: cannot open " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw std::runtime_error("load_config: " + path + ": " + e.what());
    }
    return config_from_json(j);
}

void save_config(const std::string& path, const RunConfig& cfg) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_config: cannot open " + path);
    out << config_to_json(cfg).dump(2) << '\n';
    if (!out) throw std::runtime_error("save_config: write failed for " + path);
}

void apply_env_overrides(json& j) {
    for (const auto& spec : key_specs()) {
        std::string var = "RSPO_";
        for (char c : spec.name) var += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        const char* raw = std::getenv(var.c_str());
        if (!raw) continue;
        const std::string value(raw);
        try {
            switch (spec.type) {
                case KeyType::text: j[spec.name] = value; break;
                case KeyType::boolean: {
                    std::string v = value;
                    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
                    if (v == "1" || v == "true" || v == "on" || v == "yes") j[spec.name] = true;
                    else if (v == "0" || v == "false" || v == "off" || v == "no") j[spec.name] = false;
                    else throw std::invalid_argument("expected a boolean");
                    break;
                }
                case KeyType::integer: j[spec.name] = std::stoll(value); break;
                case KeyType::unsigned64: j[spec.name] = std::stoull(value); break;
                case KeyType::real: j[spec.name] = std::stod(value); break;
            }
        } catch (const std::exception&) {
            static const char* const names[] = {"an integer", "an unsigned integer", "a number", "a boolean", "text"};
            const std::string problem = var + "=" + value + ": expected " + names[static_cast<int>(spec.type)];
            throw ConfigError(problem, {problem});
        }
    }
}

std::uint64_t config_hash(const RunConfig& cfg) {
    json j = config_to_json(cfg);
    j.erase("out");
    j.erase("threads");
    const std::string s = j.dump();
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    return h;
}

}  // namespace rspo
