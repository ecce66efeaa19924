#pragma once

// Verifiable toy environments. Every reward function is total over arbitrary
// strings, deterministic and bounded in [0, 1].

#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "rspo/mdm.hpp"
#include "rspo/rng.hpp"

namespace rspo {

inline constexpr int kTaskGeneratorVersion = 1;

enum class TaskKind { countdown, sudoku4, arith };

std::string_view task_name(TaskKind kind);
TaskKind parse_task_kind(std::string_view name);

struct CountdownPayload {
    std::vector<int> numbers;
    int target = 0;
    std::string witness;  // expression the generator evaluated
};

using SudokuGrid = std::array<int, 16>;  // row-major, 0 = empty

struct SudokuPayload {
    SudokuGrid puzzle{};
    SudokuGrid solution{};
};

struct ArithPayload {
    int a = 0;
    int b = 0;
    int modulus = 10;
};

using TaskPayload = std::variant<CountdownPayload, SudokuPayload, ArithPayload>;

struct TaskInstance {
    TaskKind kind = TaskKind::arith;
    std::string prompt;
    TaskPayload payload;
    std::string split = "train";
};

enum class RewardMode { binary, partial };

struct RewardSpec {
    RewardMode mode = RewardMode::binary;
};

// --- Countdown -------------------------------------------------------------

// Draws num_count values in [lo, hi] and a positive target reached by a
// random expression over all of them.
TaskInstance gen_countdown(Rng& rng, int num_count = 3, int lo = 1, int hi = 9);

// Value of an expression over + - * / and parentheses in which every literal
// is one of the numbers, each used at most as often as it is provided.
// Division must be exact. Spaces are ignored. nullopt on any violation.
std::optional<long long> eval_countdown_expression(std::string_view text,
                                                   const std::vector<int>& numbers);

// Binary: 1 iff the expression is valid and hits the target. Partial: 0.1
// for a valid expression that misses.
double reward_countdown(const TaskInstance& inst, std::string_view completion,
                        const RewardSpec& spec = {});

// --- 4x4 Sudoku ------------------------------------------------------------

bool sudoku4_valid_complete(const SudokuGrid& grid);
// Number of completions of a partial grid, counting stops at limit.
int sudoku4_count_solutions(const SudokuGrid& grid, int limit = 2);

TaskInstance gen_sudoku4(Rng& rng, int holes);

// Marks split = "test" for puzzles whose solution grid hashes into the test
// fraction, "train" otherwise. Puzzles sharing a solution land together.
void split_by_solution(std::vector<TaskInstance>& instances, double test_fraction);

std::string sudoku4_grid_text(const SudokuGrid& grid);
// 16 digits; '|', ',' and ' ' are skipped; anything else fails.
std::optional<SudokuGrid> parse_sudoku4(std::string_view text);

double reward_sudoku4(const TaskInstance& inst, std::string_view completion,
                      const RewardSpec& spec = {});

// --- Modular addition ------------------------------------------------------

TaskInstance gen_arith(Rng& rng, int modulus = 10);
std::optional<long long> first_integer(std::string_view text);
double reward_arith(const TaskInstance& inst, std::string_view completion);

// Dispatches on inst.kind.
double task_reward(const TaskInstance& inst, std::string_view completion, const RewardSpec& spec = {});

// --- Text <-> tokens -------------------------------------------------------

std::vector<Token> encode_text(std::string_view text, const Vocab& vocab);
std::string decode_tokens(std::span<const Token> tokens, const Vocab& vocab);

// --- Instance files (JSON Lines: kind, prompt, payload, split) -------------

std::string instance_to_json_line(const TaskInstance& inst);
TaskInstance instance_from_json_line(std::string_view line);
void write_instances(std::ostream& out, const std::vector<TaskInstance>& instances);
std::vector<TaskInstance> read_instances(std::istream& in);

struct TaskGenOptions {
    int countdown_numbers = 3;
    int sudoku_holes = 6;
    int arith_modulus = 10;
    double test_fraction = 0.2;  // sudoku only
};

// count instances from (seed, kind); sudoku pools are split by solution.
std::vector<TaskInstance> generate_instances(TaskKind kind, int count, std::uint64_t seed,
                                             const TaskGenOptions& opts = {});

}  // namespace rspo
