#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "sduda/errors.hpp"
#include "sduda/optim.hpp"

namespace sduda {

// Checkpoint container: magic "SDUA", 1-byte version, then per-parameter
// records of (uint16 LE name length, name, uint8 rank, uint32 LE dims,
// float32 LE payload). Row vectors are stored rank 1.

namespace detail {

inline void put_u16(std::ostream& os, std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>(v >> 8)};
    os.write(reinterpret_cast<const char*>(b), 2);
}

inline void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline bool get_bytes(std::istream& is, void* dst, std::size_t n) {
    is.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
    return static_cast<std::size_t>(is.gcount()) == n;
}

inline std::uint16_t get_u16(const unsigned char* b) {
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

inline std::uint32_t get_u32(const unsigned char* b) {
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace detail

template <typename Real>
void save_checkpoint(const ParameterStore<Real>& store, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw format_error("cannot open checkpoint for writing: " + path);
    os.write("SDUA", 4);
    os.put(static_cast<char>(1));
    for (const auto& [name, t] : store.params) {
        detail::put_u16(os, static_cast<std::uint16_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        const bool rank1 = t.rows() == 1;
        os.put(static_cast<char>(rank1 ? 1 : 2));
        if (rank1) {
            detail::put_u32(os, static_cast<std::uint32_t>(t.cols()));
        } else {
            detail::put_u32(os, static_cast<std::uint32_t>(t.rows()));
            detail::put_u32(os, static_cast<std::uint32_t>(t.cols()));
        }
        for (Real v : t.data()) {
            float f = static_cast<float>(v);
            std::uint32_t bits;
            std::memcpy(&bits, &f, 4);
            detail::put_u32(os, bits);
        }
    }
    if (!os) throw format_error("write failure on checkpoint: " + path);
}

template <typename Real>
ParameterStore<Real> load_checkpoint(const std::string& path, bool trainable = false) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw format_error("cannot open checkpoint: " + path);
    auto offset = [&]() { return static_cast<long long>(is.tellg()); };
    unsigned char hdr[5];
    if (!detail::get_bytes(is, hdr, 5))
        throw format_error("checkpoint truncated in header: " + path);
    if (std::memcmp(hdr, "SDUA", 4) != 0)
        throw format_error("bad checkpoint magic at byte 0: " + path);
    if (hdr[4] != 1)
        throw format_error("unsupported checkpoint version " + std::to_string(hdr[4]));
    ParameterStore<Real> store;
    unsigned char buf[4];
    while (true) {
        unsigned char len_bytes[2];
        is.read(reinterpret_cast<char*>(len_bytes), 2);
        if (is.gcount() == 0 && is.eof()) break;
        if (is.gcount() != 2)
            throw format_error("checkpoint truncated at byte " + std::to_string(offset()));
        const std::uint16_t name_len = detail::get_u16(len_bytes);
        std::string name(name_len, '\0');
        if (!detail::get_bytes(is, name.data(), name_len))
            throw format_error("checkpoint truncated in name at byte " + std::to_string(offset()));
        unsigned char rank;
        if (!detail::get_bytes(is, &rank, 1) || rank < 1 || rank > 2)
            throw format_error("bad rank in checkpoint at byte " + std::to_string(offset()));
        int rows = 1, cols = 1;
        if (rank == 1) {
            if (!detail::get_bytes(is, buf, 4))
                throw format_error("checkpoint truncated in dims at byte " +
                                   std::to_string(offset()));
            cols = static_cast<int>(detail::get_u32(buf));
        } else {
            if (!detail::get_bytes(is, buf, 4))
                throw format_error("checkpoint truncated in dims at byte " +
                                   std::to_string(offset()));
            rows = static_cast<int>(detail::get_u32(buf));
            if (!detail::get_bytes(is, buf, 4))
                throw format_error("checkpoint truncated in dims at byte " +
                                   std::to_string(offset()));
            cols = static_cast<int>(detail::get_u32(buf));
        }
        std::vector<Real> data(static_cast<std::size_t>(rows) * cols);
        for (auto& v : data) {
            if (!detail::get_bytes(is, buf, 4))
                throw format_error("checkpoint truncated in payload at byte " +
                                   std::to_string(offset()));
            std::uint32_t bits = detail::get_u32(buf);
            float f;
            std::memcpy(&f, &bits, 4);
            v = static_cast<Real>(f);
        }
        store.add(name, Tensor<Real>(rows, cols, std::move(data), trainable));
    }
    return store;
}

}  // namespace sduda
