#include "rspo/tasks.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <stdexcept>
#include <string>

namespace rspo {

std::string_view task_name(TaskKind kind) {
    switch (kind) {
        case TaskKind::countdown: return "countdown";
        case TaskKind::sudoku4: return "sudoku4";
        case TaskKind::arith: return "arith";
    }
    return "unknown";
}

TaskKind parse_task_kind(std::string_view name) {
    if (name == "countdown") return TaskKind::countdown;
    if (name == "sudoku4" || name == "sudoku") return TaskKind::sudoku4;
    if (name == "arith") return TaskKind::arith;
    throw std::invalid_argument("unknown task '" + std::string(name) +
                                "' (expected countdown, sudoku4 or arith)");
}

// ---------------------------------------------------------------------------
// Countdown

namespace {

class CountdownParser {
public:
    CountdownParser(std::string_view text, const std::vector<int>& numbers) {
        for (char c : text)
            if (c != ' ') text_.push_back(c);
        for (int n : numbers) ++available_[n];
    }

    std::optional<long long> parse() {
        if (text_.empty()) return std::nullopt;
        auto v = expr(0);
        if (!v || pos_ != text_.size()) return std::nullopt;
        return v;
    }

private:
    static constexpr int kMaxDepth = 64;

    bool peek(char c) const { return pos_ < text_.size() && text_[pos_] == c; }

    std::optional<long long> expr(int depth) {
        auto lhs = term(depth);
        while (lhs && (peek('+') || peek('-'))) {
            const char op = text_[pos_++];
            auto rhs = term(depth);
            if (!rhs) return std::nullopt;
            long long out = 0;
            const bool overflow = op == '+' ? __builtin_add_overflow(*lhs, *rhs, &out)
                                            : __builtin_sub_overflow(*lhs, *rhs, &out);
            if (overflow) return std::nullopt;
            lhs = out;
        }
        return lhs;
    }

    std::optional<long long> term(int depth) {
        auto lhs = factor(depth);
        while (lhs && (peek('*') || peek('/'))) {
            const char op = text_[pos_++];
            auto rhs = factor(depth);
            if (!rhs) return std::nullopt;
            if (op == '*') {
                long long out = 0;
                if (__builtin_mul_overflow(*lhs, *rhs, &out)) return std::nullopt;
                lhs = out;
            } else {
                if (*rhs == 0 || *lhs % *rhs != 0) return std::nullopt;
                lhs = *lhs / *rhs;
            }
        }
        return lhs;
    }

    std::optional<long long> factor(int depth) {
        if (depth > kMaxDepth) return std::nullopt;
        if (peek('(')) {
            ++pos_;
            auto v = expr(depth + 1);
            if (!v || !peek(')')) return std::nullopt;
            ++pos_;
            return v;
        }
        const std::size_t start = pos_;
        while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
        const std::size_t len = pos_ - start;
        if (len == 0 || len > 9) return std::nullopt;
        if (len > 1 && text_[start] == '0') return std::nullopt;
        const int value = std::stoi(text_.substr(start, len));
        auto it = available_.find(value);
        if (it == available_.end() || it->second == 0) return std::nullopt;
        --it->second;
        return value;
    }

    std::string text_;
    std::size_t pos_ = 0;
    std::map<int, int> available_;
};

std::string join_numbers(const std::vector<int>& numbers) {
    std::string out;
    for (std::size_t i = 0; i < numbers.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(numbers[i]);
    }
    return out;
}

}  // namespace

std::optional<long long> eval_countdown_expression(std::string_view text,
                                                   const std::vector<int>& numbers) {
    return CountdownParser(text, numbers).parse();
}

TaskInstance gen_countdown(Rng& rng, int num_count, int lo, int hi) {
    if (num_count < 2 || num_count > 6) throw std::invalid_argument("gen_countdown: num_count must be in 2..6");
    if (lo < 1 || hi < lo) throw std::invalid_argument("gen_countdown: need 1 <= lo <= hi");
    for (;;) {
        CountdownPayload p;
        struct Node {
            long long value;
            std::string text;
        };
        std::vector<Node> nodes;
        for (int i = 0; i < num_count; ++i) {
            p.numbers.push_back(rng.uniform_int(lo, hi));
            nodes.push_back({p.numbers.back(), std::to_string(p.numbers.back())});
        }
        bool ok = true;
        while (nodes.size() > 1 && ok) {
            const auto i = static_cast<std::size_t>(rng.below(nodes.size()));
            Node a = nodes[i];
            nodes.erase(nodes.begin() + static_cast<std::ptrdiff_t>(i));
            const auto j = static_cast<std::size_t>(rng.below(nodes.size()));
            Node b = nodes[j];
            nodes.erase(nodes.begin() + static_cast<std::ptrdiff_t>(j));
            const char op = "+-*/"[rng.below(4)];
            long long v = 0;
            switch (op) {
                case '+': v = a.value + b.value; break;
                case '-': v = a.value - b.value; break;
                case '*': v = a.value * b.value; break;
                default:
                    if (b.value == 0 || a.value % b.value != 0) ok = false;
                    else v = a.value / b.value;
            }
            const std::string text = a.text + op + b.text;
            nodes.push_back({v, nodes.empty() ? text : "(" + text + ")"});
        }
        if (!ok || nodes[0].value < 1 || nodes[0].value > 999) continue;
        p.target = static_cast<int>(nodes[0].value);
        p.witness = nodes[0].text;
        TaskInstance inst;
        inst.kind = TaskKind::countdown;
        inst.prompt = join_numbers(p.numbers) + "=" + std::to_string(p.target);
        inst.payload = std::move(p);
        return inst;
    }
}

double reward_countdown(const TaskInstance& inst, std::string_view completion, const RewardSpec& spec) {
    const auto* p = std::get_if<CountdownPayload>(&inst.payload);
    if (!p) throw std::invalid_argument("reward_countdown: not a countdown instance");
    const auto value = eval_countdown_expression(completion, p->numbers);
    if (!value) return 0.0;
    if (*value == p->target) return 1.0;
    return spec.mode == RewardMode::partial ? 0.1 : 0.0;
}

// ---------------------------------------------------------------------------
// Sudoku 4x4

namespace {

bool placement_ok(const SudokuGrid& g, int cell, int digit) {
    const int r = cell / 4, c = cell % 4;
    for (int k = 0; k < 4; ++k) {
        if (k != c && g[static_cast<std::size_t>(r * 4 + k)] == digit) return false;
        if (k != r && g[static_cast<std::size_t>(k * 4 + c)] == digit) return false;
    }
    const int br = (r / 2) * 2, bc = (c / 2) * 2;
    for (int dr = 0; dr < 2; ++dr)
        for (int dc = 0; dc < 2; ++dc) {
            const int other = (br + dr) * 4 + bc + dc;
            if (other != cell && g[static_cast<std::size_t>(other)] == digit) return false;
        }
    return true;
}

int count_from(SudokuGrid& g, int cell, int limit) {
    while (cell < 16 && g[static_cast<std::size_t>(cell)] != 0) ++cell;
    if (cell == 16) return 1;
    int found = 0;
    for (int d = 1; d <= 4 && found < limit; ++d) {
        if (!placement_ok(g, cell, d)) continue;
        g[static_cast<std::size_t>(cell)] = d;
        found += count_from(g, cell + 1, limit - found);
        g[static_cast<std::size_t>(cell)] = 0;
    }
    return found;
}

bool fill_random(SudokuGrid& g, int cell, Rng& rng) {
    if (cell == 16) return true;
    std::array<int, 4> digits{1, 2, 3, 4};
    rng.shuffle(digits.begin(), digits.end());
    for (int d : digits) {
        if (!placement_ok(g, cell, d)) continue;
        g[static_cast<std::size_t>(cell)] = d;
        if (fill_random(g, cell + 1, rng)) return true;
        g[static_cast<std::size_t>(cell)] = 0;
    }
    return false;
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    return h;
}

}  // namespace

bool sudoku4_valid_complete(const SudokuGrid& grid) {
    for (int cell = 0; cell < 16; ++cell) {
        const int d = grid[static_cast<std::size_t>(cell)];
        if (d < 1 || d > 4 || !placement_ok(grid, cell, d)) return false;
    }
    return true;
}

int sudoku4_count_solutions(const SudokuGrid& grid, int limit) {
    for (int cell = 0; cell < 16; ++cell) {
        const int d = grid[static_cast<std::size_t>(cell)];
        if (d < 0 || d > 4) return 0;
        if (d != 0 && !placement_ok(grid, cell, d)) return 0;
    }
    SudokuGrid g = grid;
    return count_from(g, 0, limit);
}

std::string sudoku4_grid_text(const SudokuGrid& grid) {
    std::string out;
    for (int r = 0; r < 4; ++r) {
        if (r) out += '|';
        for (int c = 0; c < 4; ++c) out += static_cast<char>('0' + grid[static_cast<std::size_t>(r * 4 + c)]);
    }
    return out;
}

std::optional<SudokuGrid> parse_sudoku4(std::string_view text) {
    SudokuGrid g{};
    int n = 0;
    for (char c : text) {
        if (c == '|' || c == ',' || c == ' ') continue;
        if (c < '0' || c > '9' || n == 16) return std::nullopt;
        g[static_cast<std::size_t>(n++)] = c - '0';
    }
    if (n != 16) return std::nullopt;
    return g;
}

TaskInstance gen_sudoku4(Rng& rng, int holes) {
    if (holes < 1 || holes > 12) throw std::invalid_argument("gen_sudoku4: holes must be in 1..12");
    for (;;) {
        SudokuPayload p;
        fill_random(p.solution, 0, rng);
        p.puzzle = p.solution;
        std::array<int, 16> order{};
        for (int i = 0; i < 16; ++i) order[static_cast<std::size_t>(i)] = i;
        rng.shuffle(order.begin(), order.end());
        int removed = 0;
        for (int cell : order) {
            if (removed == holes) break;
            const int keep = p.puzzle[static_cast<std::size_t>(cell)];
            p.puzzle[static_cast<std::size_t>(cell)] = 0;
            if (sudoku4_count_solutions(p.puzzle, 2) == 1)
                ++removed;
            else
                p.puzzle[static_cast<std::size_t>(cell)] = keep;
        }
        if (removed != holes) continue;
        TaskInstance inst;
        inst.kind = TaskKind::sudoku4;
        inst.prompt = sudoku4_grid_text(p.puzzle);
        inst.payload = p;
        return inst;
    }
}

void split_by_solution(std::vector<TaskInstance>& instances, double test_fraction) {
    if (!(test_fraction >= 0.0 && test_fraction <= 1.0))
        throw std::invalid_argument("split_by_solution: test_fraction must be in [0, 1]");
    for (TaskInstance& inst : instances) {
        const auto* p = std::get_if<SudokuPayload>(&inst.payload);
        if (!p) throw std::invalid_argument("split_by_solution: not a sudoku instance");
        const std::uint64_t h = fnv1a(sudoku4_grid_text(p->solution));
        const double u = static_cast<double>(h % 1000003ULL) / 1000003.0;
        inst.split = u < test_fraction ? "test" : "train";
    }
}

double reward_sudoku4(const TaskInstance& inst, std::string_view completion, const RewardSpec& spec) {
    const auto* p = std::get_if<SudokuPayload>(&inst.payload);
    if (!p) throw std::invalid_argument("reward_sudoku4: not a sudoku instance");
    const auto grid = parse_sudoku4(completion);
    if (!grid) return 0.0;
    if (spec.mode == RewardMode::binary) {
        if (!sudoku4_valid_complete(*grid)) return 0.0;
        for (std::size_t i = 0; i < 16; ++i)
            if (p->puzzle[i] != 0 && (*grid)[i] != p->puzzle[i]) return 0.0;
        return 1.0;
    }
    int holes = 0, correct = 0;
    for (std::size_t i = 0; i < 16; ++i) {
        if (p->puzzle[i] != 0) continue;
        ++holes;
        if ((*grid)[i] == p->solution[i]) ++correct;
    }
    return holes == 0 ? 1.0 : static_cast<double>(correct) / holes;
}

// ---------------------------------------------------------------------------
// Modular addition

TaskInstance gen_arith(Rng& rng, int modulus) {
    if (modulus < 2 || modulus > 100) throw std::invalid_argument("gen_arith: modulus must be in 2..100");
    ArithPayload p;
    p.modulus = modulus;
    p.a = static_cast<int>(rng.below(static_cast<std::uint64_t>(modulus)));
    p.b = static_cast<int>(rng.below(static_cast<std::uint64_t>(modulus)));
    TaskInstance inst;
    inst.kind = TaskKind::arith;
    inst.prompt = std::to_string(p.a) + "+" + std::to_string(p.b) + "=?";
    inst.payload = p;
    return inst;
}

std::optional<long long> first_integer(std::string_view text) {
    std::size_t i = 0;
    while (i < text.size() && !std::isdigit(static_cast<unsigned char>(text[i]))) ++i;
    if (i == text.size()) return std::nullopt;
    long long v = 0;
    for (; i < text.size() && std::isdigit(static_cast<unsigned char>(text[i])); ++i) {
        if (v > 100000000000LL) return std::nullopt;
        v = v * 10 + (text[i] - '0');
    }
    return v;
}

double reward_arith(const TaskInstance& inst, std::string_view completion) {
    const auto* p = std::get_if<ArithPayload>(&inst.payload);
    if (!p) throw std::invalid_argument("reward_arith: not an arith instance");
    const auto v = first_integer(completion);
    return v && *v == (p->a + p->b) % p->modulus ? 1.0 : 0.0;
}

double task_reward(const TaskInstance& inst, std::string_view completion, const RewardSpec& spec) {
    switch (inst.kind) {
        case TaskKind::countdown: return reward_countdown(inst, completion, spec);
        case TaskKind::sudoku4: return reward_sudoku4(inst, completion, spec);
        case TaskKind::arith: return reward_arith(inst, completion);
    }
    return 0.0;
}

// ---------------------------------------------------------------------------
// Encoding

std::vector<Token> encode_text(std::string_view text, const Vocab& vocab) {
    std::vector<Token> out;
    out.reserve(text.size());
    for (char c : text) {
        const auto t = vocab.lookup(c);
        if (!t) throw std::invalid_argument(std::string("encode_text: character '") + c + "' not in vocabulary");
        out.push_back(*t);
    }
    return out;
}

std::string decode_tokens(std::span<const Token> tokens, const Vocab& vocab) {
    std::string out;
    out.reserve(tokens.size());
    for (Token t : tokens) out += vocab.symbol(t);
    return out;
}

std::vector<TaskInstance> generate_instances(TaskKind kind, int count, std::uint64_t seed,
                                             const TaskGenOptions& opts) {
    if (count < 0) throw std::invalid_argument("generate_instances: count must be >= 0");
    Rng base(seed, 0x7A5C + static_cast<std::uint64_t>(kTaskGeneratorVersion));
    std::vector<TaskInstance> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        Rng rng = base.fork(static_cast<std::uint64_t>(i));
        switch (kind) {
            case TaskKind::countdown: out.push_back(gen_countdown(rng, opts.countdown_numbers)); break;
            case TaskKind::sudoku4: out.push_back(gen_sudoku4(rng, opts.sudoku_holes)); break;
            case TaskKind::arith: out.push_back(gen_arith(rng, opts.arith_modulus)); break;
        }
    }
    if (kind == TaskKind::sudoku4) split_by_solution(out, opts.test_fraction);
    return out;
}

}  // namespace rspo
