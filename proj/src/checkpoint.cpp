#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "rspo/binary_io.hpp"
#include "rspo/mdm.hpp"

namespace rspo {

namespace {
constexpr std::array<char, 8> kMagic = {'R', 'S', 'P', 'O', 'M', 'D', 'M', '\0'};
}

void write_params(std::ostream& out, const DenoiserParams& params, std::uint64_t seed) {
    params.validate();
    const DenoiserShape& s = params.shape;
    out.write(kMagic.data(), kMagic.size());
    io::write_u32(out, kCheckpointVersion);
    io::write_u32(out, static_cast<std::uint32_t>(s.vocab_size));
    io::write_u32(out, static_cast<std::uint32_t>(s.window));
    io::write_u32(out, static_cast<std::uint32_t>(s.hidden));
    io::write_u32(out, static_cast<std::uint32_t>(s.embed));
    io::write_u32(out, static_cast<std::uint32_t>(s.positions));
    io::write_u64(out, seed);
    io::write_u64(out, params.theta.size());
    io::write_f64s(out, params.theta);
    if (!out) throw std::runtime_error("write_params: stream write failed");
}

DenoiserParams read_params(std::istream& in, std::uint64_t* seed) {
    std::array<char, 8> magic{};
    in.read(magic.data(), magic.size());
    if (!in || magic != kMagic) throw std::runtime_error("read_params: bad magic");
    const std::uint32_t version = io::read_u32(in);
    if (version != kCheckpointVersion)
        throw std::runtime_error("read_params: unsupported format version " + std::to_string(version));
    DenoiserShape s;
    s.vocab_size = static_cast<int>(io::read_u32(in));
    s.window = static_cast<int>(io::read_u32(in));
    s.hidden = static_cast<int>(io::read_u32(in));
    s.embed = static_cast<int>(io::read_u32(in));
    s.positions = static_cast<int>(io::read_u32(in));
    const std::uint64_t file_seed = io::read_u64(in);
    const std::uint64_t count = io::read_u64(in);
    s.validate();
    if (count != s.param_count())
        throw std::runtime_error("read_params: parameter count " + std::to_string(count) +
                                 " does not match header shape (" + std::to_string(s.param_count()) + ")");
    DenoiserParams p{s, std::vector<double>(count)};
    io::read_f64s(in, p.theta);
    if (seed) *seed = file_seed;
    return p;
}

void save_params(const std::string& path, const DenoiserParams& params, std::uint64_t seed) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_params: cannot open " + path);
    write_params(out, params, seed);
}

DenoiserParams load_params(const std::string& path, std::uint64_t* seed) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_params: cannot open " + path);
    try {
        return read_params(in, seed);
    } catch (const std::exception& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
}

std::uint64_t hash_params(const DenoiserParams& params) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    auto feed = [&h](std::uint64_t word) {
        for (int b = 0; b < 8; ++b) {
            h ^= (word >> (8 * b)) & 0xFF;
            h *= 0x100000001B3ULL;
        }
    };
    feed(static_cast<std::uint64_t>(params.shape.param_count()));
    for (double v : params.theta) feed(std::bit_cast<std::uint64_t>(v));
    return h;
}

}  // namespace rspo
