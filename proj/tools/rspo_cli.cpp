#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "rspo/config.hpp"
#include "rspo/harness.hpp"
#include "rspo/tasks.hpp"

namespace {

using nlohmann::json;

struct TrainFlags {
    std::string config_path;
    std::optional<double> lambda;
    std::optional<int> group_size;
    std::optional<int> k_masks;
    std::optional<int> steps;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> task;
    std::optional<std::string> out;
    std::optional<int> threads;
    bool no_centering = false;
    bool no_reference = false;
    bool normalize_adv = false;
};

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
}

// defaults < config file < RSPO_* environment < command-line flags
rspo::RunConfig resolve_config(const TrainFlags& f) {
    json j = f.config_path.empty() ? json::object() : read_json_file(f.config_path);
    rspo::apply_env_overrides(j);
    if (f.lambda) j["lambda"] = *f.lambda;
    if (f.group_size) j["group_size"] = *f.group_size;
    if (f.k_masks) j["k_masks"] = *f.k_masks;
    if (f.steps) j["steps"] = *f.steps;
    if (f.seed) j["seed"] = *f.seed;
    if (f.task) j["task"] = *f.task;
    if (f.out) j["out"] = *f.out;
    if (f.threads) j["threads"] = *f.threads;
    if (f.no_centering) j["centering"] = false;
    if (f.no_reference) j["reference"] = false;
    if (f.normalize_adv) j["normalize_adv"] = true;
    return rspo::config_from_json(j);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Relative score policy optimization for a tiny masked diffusion model"};
    app.require_subcommand(1);

    TrainFlags flags;
    auto* train = app.add_subcommand("train", "run one training experiment");
    train->add_option("--config", flags.config_path, "flat JSON config file")->check(CLI::ExistingFile);
    train->add_option("--lambda", flags.lambda, "feedback coefficient; 0 selects the AW objective");
    train->add_option("--group-size", flags.group_size, "completions per prompt");
    train->add_option("--k-masks", flags.k_masks, "masks per ELBO estimate");
    train->add_option("--steps", flags.steps, "optimizer steps");
    train->add_option("--seed", flags.seed, "run seed");
    train->add_option("--task", flags.task, "arith, countdown or sudoku4");
    train->add_option("--out", flags.out, "output directory");
    train->add_option("--threads", flags.threads, "OpenMP threads (0 = default)");
    train->add_flag("--no-centering", flags.no_centering, "use raw relative scores");
    train->add_flag("--no-reference", flags.no_reference, "score without the reference model");
    train->add_flag("--normalize-adv", flags.normalize_adv, "divide advantages by the group std");

    auto* audit = app.add_subcommand("audit", "run the oracle checks");
    std::uint64_t audit_seed = 7;
    audit->add_option("--seed", audit_seed, "audit seed");

    std::string matrix_path;
    auto* ablate = app.add_subcommand("ablate", "run a lambda x centering x reference grid");
    ablate->add_option("--matrix", matrix_path, "JSON grid description")->required()->check(CLI::ExistingFile);

    std::string gen_task = "arith", gen_out;
    int gen_count = 100;
    std::uint64_t gen_seed = 1;
    auto* generate = app.add_subcommand("generate", "write task instances as JSON Lines");
    generate->add_option("--task", gen_task, "arith, countdown or sudoku4");
    generate->add_option("--count", gen_count, "number of instances")->check(CLI::PositiveNumber);
    generate->add_option("--seed", gen_seed, "generator seed");
    generate->add_option("--out", gen_out, "output file (default stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) {
            const rspo::RunConfig cfg = resolve_config(flags);
            const rspo::RunResult r = rspo::run_experiment(cfg, &std::cout);
            std::cout << r.summary.dump(2) << '\n';
        } else if (*audit) {
            return rspo::run_audit(std::cout, audit_seed) == 0 ? 0 : 1;
        } else if (*ablate) {
            const rspo::AblationMatrix m = rspo::load_ablation_matrix(matrix_path);
            std::cout << rspo::run_ablation(m, &std::cout).dump(2) << '\n';
        } else if (*generate) {
            const auto instances = rspo::generate_instances(rspo::parse_task_kind(gen_task), gen_count, gen_seed);
            if (gen_out.empty()) {
                rspo::write_instances(std::cout, instances);
            } else {
                std::ofstream out(gen_out);
                if (!out) throw std::runtime_error("cannot open " + gen_out);
                rspo::write_instances(out, instances);
            }
        }
    } catch (const rspo::ConfigError& e) {
        std::cerr << "config error:\n";
        for (const auto& p : e.problems()) std::cerr << "  " << p << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
