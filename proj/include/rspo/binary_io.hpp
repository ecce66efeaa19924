#pragma once

// Little-endian primitives shared by the checkpoint formats.

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

namespace rspo::io {

inline void write_u32(std::ostream& out, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.write(b, 4);
}

inline void write_u64(std::ostream& out, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.write(b, 8);
}

inline void write_f64s(std::ostream& out, std::span<const double> values) {
    for (double v : values) write_u64(out, std::bit_cast<std::uint64_t>(v));
}

inline std::uint64_t read_le(std::istream& in, int bytes) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), bytes);
    if (!in) throw std::runtime_error("unexpected end of binary stream");
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

inline std::uint32_t read_u32(std::istream& in) { return static_cast<std::uint32_t>(read_le(in, 4)); }
inline std::uint64_t read_u64(std::istream& in) { return read_le(in, 8); }

inline void read_f64s(std::istream& in, std::span<double> values) {
    for (double& v : values) v = std::bit_cast<double>(read_u64(in));
}

}  // namespace rspo::io
