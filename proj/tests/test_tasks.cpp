#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <set>
#include <sstream>

#include "rspo/tasks.hpp"

using namespace rspo;

namespace {

// Every value reachable by combining the numbers pairwise with + - * and exact /.
void reachable(std::vector<long long> values, std::set<long long>& out) {
    for (long long v : values) out.insert(v);
    for (std::size_t i = 0; i < values.size(); ++i) {
        for (std::size_t j = 0; j < values.size(); ++j) {
            if (i == j) continue;
            const long long a = values[i], b = values[j];
            std::vector<long long> rest;
            for (std::size_t k = 0; k < values.size(); ++k)
                if (k != i && k != j) rest.push_back(values[k]);
            std::vector<long long> results{a + b, a - b, a * b};
            if (b != 0 && a % b == 0) results.push_back(a / b);
            for (long long r : results) {
                auto next = rest;
                next.push_back(r);
                reachable(next, out);
            }
        }
    }
}

// Completions of a partial grid by trying every digit in every hole.
int brute_force_solutions(const SudokuGrid& puzzle) {
    std::vector<int> holes;
    for (int i = 0; i < 16; ++i)
        if (puzzle[static_cast<std::size_t>(i)] == 0) holes.push_back(i);
    int count = 0;
    long long combos = 1;
    for (std::size_t k = 0; k < holes.size(); ++k) combos *= 4;
    for (long long code = 0; code < combos; ++code) {
        SudokuGrid g = puzzle;
        long long c = code;
        for (int h : holes) {
            g[static_cast<std::size_t>(h)] = static_cast<int>(c % 4) + 1;
            c /= 4;
        }
        if (sudoku4_valid_complete(g)) ++count;
    }
    return count;
}

TaskInstance countdown_instance(std::vector<int> numbers, int target) {
    TaskInstance inst;
    inst.kind = TaskKind::countdown;
    inst.payload = CountdownPayload{std::move(numbers), target, ""};
    return inst;
}

}  // namespace

TEST_CASE("countdown verifier") {
    const TaskInstance inst = countdown_instance({3, 5, 2}, 16);
    CHECK(reward_countdown(inst, "(3+5)*2") == 1.0);
    CHECK(reward_countdown(inst, " ( 3 + 5 ) * 2 ") == 1.0);
    CHECK(reward_countdown(inst, "3+5") == 0.0);
    CHECK(reward_countdown(inst, "(3+3)*2") == 0.0);
    CHECK(reward_countdown(inst, "(3+5)*2)") == 0.0);
    CHECK(reward_countdown(inst, "") == 0.0);
    CHECK(reward_countdown(inst, "35-2") == 0.0);
    CHECK(reward_countdown(inst, "3+5", RewardSpec{RewardMode::partial}) == doctest::Approx(0.1));

    CHECK(eval_countdown_expression("5/2", {5, 2}) == std::nullopt);
    CHECK(eval_countdown_expression("6/2", {6, 2}) == 3);
    CHECK(eval_countdown_expression("2-6", {6, 2}) == -4);
    CHECK(eval_countdown_expression("-2+6", {6, 2}) == std::nullopt);
    CHECK(eval_countdown_expression("3*3", {3, 3}) == 9);
    CHECK(eval_countdown_expression("5/(2-2)", {5, 2, 2}) == std::nullopt);
}

TEST_CASE("countdown generator targets are reachable by exhaustive search") {
    Rng rng(2024);
    for (int n = 0; n < 1000; ++n) {
        const TaskInstance inst = gen_countdown(rng, 3 + static_cast<int>(n % 2));
        const auto& p = std::get<CountdownPayload>(inst.payload);
        CHECK(p.target > 0);
        CHECK(reward_countdown(inst, p.witness) == 1.0);
        std::set<long long> values;
        reachable(std::vector<long long>(p.numbers.begin(), p.numbers.end()), values);
        CHECK(values.count(p.target) == 1);
        CHECK_NOTHROW(encode_text(inst.prompt, Vocab::task_default()));
    }
}

TEST_CASE("sudoku generator produces uniquely solvable puzzles") {
    Rng rng(11);
    for (int n = 0; n < 200; ++n) {
        const int holes = 4 + n % 5;
        const TaskInstance inst = gen_sudoku4(rng, holes);
        const auto& p = std::get<SudokuPayload>(inst.payload);
        CHECK(sudoku4_valid_complete(p.solution));
        int empty = 0;
        for (std::size_t i = 0; i < 16; ++i) {
            if (p.puzzle[i] == 0) ++empty;
            else CHECK(p.puzzle[i] == p.solution[i]);
        }
        CHECK(empty == holes);
        CHECK(brute_force_solutions(p.puzzle) == 1);
        CHECK(reward_sudoku4(inst, sudoku4_grid_text(p.solution)) == 1.0);
        CHECK_NOTHROW(encode_text(inst.prompt, Vocab::task_default()));
    }
}

TEST_CASE("sudoku validity and rewards") {
    const SudokuGrid solved{1, 2, 3, 4, 3, 4, 1, 2, 2, 1, 4, 3, 4, 3, 2, 1};
    CHECK(sudoku4_valid_complete(solved));
    SudokuGrid broken = solved;
    std::swap(broken[0], broken[1]);
    CHECK_FALSE(sudoku4_valid_complete(broken));
    CHECK(sudoku4_count_solutions(solved) == 1);

    SudokuGrid puzzle = solved;
    for (int i : {0, 5, 6, 9, 10, 15}) puzzle[static_cast<std::size_t>(i)] = 0;
    TaskInstance inst;
    inst.kind = TaskKind::sudoku4;
    inst.payload = SudokuPayload{puzzle, solved};

    CHECK(reward_sudoku4(inst, "1234|3412|2143|4321") == 1.0);
    CHECK(reward_sudoku4(inst, "1234341221434321") == 1.0);
    CHECK(reward_sudoku4(inst, "garbage") == 0.0);

    // A given cell altered: the grid is still a valid square but inconsistent.
    const std::string relabeled = "2143|4321|1234|3412";
    CHECK(reward_sudoku4(inst, relabeled) == 0.0);

    // Five of six holes right in partial mode.
    std::string five = "1234|3412|2143|4321";
    five[18] = '2';
    CHECK(reward_sudoku4(inst, five, RewardSpec{RewardMode::partial}) == doctest::Approx(5.0 / 6.0));
    CHECK(reward_sudoku4(inst, five) == 0.0);
    CHECK(reward_sudoku4(inst, "x", RewardSpec{RewardMode::partial}) == 0.0);
}

TEST_CASE("solution split keeps shared solutions together") {
    auto pool = generate_instances(TaskKind::sudoku4, 600, 5, TaskGenOptions{3, 6, 10, 0.25});
    std::map<std::string, std::set<std::string>> sides;
    int test = 0;
    for (const auto& inst : pool) {
        sides[sudoku4_grid_text(std::get<SudokuPayload>(inst.payload).solution)].insert(inst.split);
        test += inst.split == "test";
    }
    for (const auto& [solution, s] : sides) CHECK(s.size() == 1);
    CHECK(test > 0);
    CHECK(test < 600);
}

TEST_CASE("modular arithmetic") {
    TaskInstance inst;
    inst.kind = TaskKind::arith;
    inst.payload = ArithPayload{3, 4, 10};
    CHECK(reward_arith(inst, "7") == 1.0);
    CHECK(reward_arith(inst, "8") == 0.0);
    CHECK(reward_arith(inst, "=?  7|") == 1.0);
    CHECK(reward_arith(inst, "77") == 0.0);
    CHECK(reward_arith(inst, "") == 0.0);

    Rng rng(6);
    for (int n = 0; n < 100; ++n) {
        const TaskInstance g = gen_arith(rng, 10);
        const auto& p = std::get<ArithPayload>(g.payload);
        CHECK(p.a < 10);
        CHECK(p.b < 10);
        CHECK(g.prompt == std::to_string(p.a) + "+" + std::to_string(p.b) + "=?");
    }
    CHECK_THROWS_AS(gen_arith(rng, 101), std::invalid_argument);
}

TEST_CASE("rewards are deterministic and bounded on arbitrary strings") {
    Rng rng(13);
    const std::string alphabet = Vocab::task_default().alphabet();
    const TaskInstance cd = gen_countdown(rng);
    const TaskInstance sd = gen_sudoku4(rng, 6);
    const TaskInstance ar = gen_arith(rng);
    for (int n = 0; n < 2000; ++n) {
        std::string s;
        const int len = static_cast<int>(rng.below(20));
        for (int k = 0; k < len; ++k) s += alphabet[rng.below(alphabet.size())];
        for (const TaskInstance* inst : {&cd, &sd, &ar}) {
            for (RewardMode mode : {RewardMode::binary, RewardMode::partial}) {
                const double r = task_reward(*inst, s, RewardSpec{mode});
                CHECK(r >= 0.0);
                CHECK(r <= 1.0);
                CHECK(r == task_reward(*inst, s, RewardSpec{mode}));
            }
        }
    }
}

TEST_CASE("text encoding round trip") {
    const Vocab v = Vocab::task_default();
    const std::string text = "(3+5)*2=16|0,1 ?";
    CHECK(decode_tokens(encode_text(text, v), v) == text);
    CHECK_THROWS_AS(encode_text("abc", v), std::invalid_argument);
}

TEST_CASE("instance files round trip") {
    std::vector<TaskInstance> all;
    for (TaskKind k : {TaskKind::countdown, TaskKind::sudoku4, TaskKind::arith}) {
        auto part = generate_instances(k, 20, 3);
        all.insert(all.end(), part.begin(), part.end());
    }
    std::stringstream buf;
    write_instances(buf, all);
    const auto back = read_instances(buf);
    REQUIRE(back.size() == all.size());
    for (std::size_t i = 0; i < all.size(); ++i) CHECK(instance_to_json_line(back[i]) == instance_to_json_line(all[i]));

    std::stringstream bad("{\"kind\":\"arith\"}\n");
    CHECK_THROWS(read_instances(bad));
    CHECK(generate_instances(TaskKind::arith, 5, 9).size() == 5);
    CHECK(instance_to_json_line(generate_instances(TaskKind::countdown, 1, 9)[0]) ==
          instance_to_json_line(generate_instances(TaskKind::countdown, 1, 9)[0]));
}
