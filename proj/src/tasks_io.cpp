#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "rspo/tasks.hpp"

namespace rspo {

using nlohmann::json;

namespace {

SudokuGrid grid_from_string(const std::string& s) {
    if (s.size() != 16) throw std::invalid_argument("sudoku grid must have 16 digits");
    SudokuGrid g{};
    for (std::size_t i = 0; i < 16; ++i) {
        if (s[i] < '0' || s[i] > '4') throw std::invalid_argument("sudoku grid digit out of range");
        g[i] = s[i] - '0';
    }
    return g;
}

std::string grid_to_string(const SudokuGrid& g) {
    std::string s;
    for (int d : g) s += static_cast<char>('0' + d);
    return s;
}

}  // namespace

std::string instance_to_json_line(const TaskInstance& inst) {
    json payload;
    if (const auto* c = std::get_if<CountdownPayload>(&inst.payload)) {
        payload = {{"numbers", c->numbers}, {"target", c->target}, {"witness", c->witness}};
    } else if (const auto* s = std::get_if<SudokuPayload>(&inst.payload)) {
        payload = {{"puzzle", grid_to_string(s->puzzle)}, {"solution", grid_to_string(s->solution)}};
    } else if (const auto* a = std::get_if<ArithPayload>(&inst.payload)) {
        payload = {{"a", a->a}, {"b", a->b}, {"modulus", a->modulus}};
    }
    json j = {{"kind", std::string(task_name(inst.kind))},
              {"prompt", inst.prompt},
              {"payload", payload},
              {"split", inst.split}};
    return j.dump();
}

TaskInstance instance_from_json_line(std::string_view line) {
    const json j = json::parse(line);
    TaskInstance inst;
    inst.kind = parse_task_kind(j.at("kind").get<std::string>());
    inst.prompt = j.at("prompt").get<std::string>();
    inst.split = j.at("split").get<std::string>();
    const json& p = j.at("payload");
    switch (inst.kind) {
        case TaskKind::countdown: {
            CountdownPayload c;
            c.numbers = p.at("numbers").get<std::vector<int>>();
            c.target = p.at("target").get<int>();
            c.witness = p.value("witness", std::string{});
            inst.payload = std::move(c);
            break;
        }
        case TaskKind::sudoku4: {
            SudokuPayload s;
            s.puzzle = grid_from_string(p.at("puzzle").get<std::string>());
            s.solution = grid_from_string(p.at("solution").get<std::string>());
            inst.payload = s;
            break;
        }
        case TaskKind::arith: {
            ArithPayload a;
            a.a = p.at("a").get<int>();
            a.b = p.at("b").get<int>();
            a.modulus = p.at("modulus").get<int>();
            inst.payload = a;
            break;
        }
    }
    return inst;
}

void write_instances(std::ostream& out, const std::vector<TaskInstance>& instances) {
    for (const TaskInstance& inst : instances) out << instance_to_json_line(inst) << '\n';
    if (!out) throw std::runtime_error("write_instances: stream write failed");
}

std::vector<TaskInstance> read_instances(std::istream& in) {
    std::vector<TaskInstance> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            out.push_back(instance_from_json_line(line));
        } catch (const std::exception& e) {
            throw std::runtime_error("instance line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace rspo
