// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 csipred contributors

#ifndef CSIPRED_IO_HPP
#define CSIPRED_IO_HPP

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "csipred/errors.hpp"

namespace csipred {

// Little-endian binary writer/reader for the dataset and checkpoint
// containers. Byte order is pinned so files are portable regardless of host.

class BinWriter {
  public:
    explicit BinWriter(const std::string& path)
        : out_(path, std::ios::binary | std::ios::trunc) {
        if (!out_) throw Error("cannot open for writing: " + path);
    }

    void bytes(const void* p, std::size_t n) {
        out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    }

    void u32(std::uint32_t v) { put_le(v); }
    void u64(std::uint64_t v) { put_le(v); }
    void f64(double v) { put_le(std::bit_cast<std::uint64_t>(v)); }

    void close() {
        out_.close();
        if (!out_) throw Error("write failed on close");
    }

  private:
    template <typename U>
    void put_le(U v) {
        unsigned char b[sizeof(U)];
        for (std::size_t i = 0; i < sizeof(U); ++i)
            b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
        bytes(b, sizeof(U));
    }

    std::ofstream out_;
};

class BinReader {
  public:
    explicit BinReader(const std::string& path)
        : in_(path, std::ios::binary) {
        if (!in_) throw Error("cannot open for reading: " + path);
    }

    void bytes(void* p, std::size_t n) {
        in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n)
            throw CorruptError("unexpected end of file");
    }

    std::uint32_t u32() { return get_le<std::uint32_t>(); }
    std::uint64_t u64() { return get_le<std::uint64_t>(); }
    double f64() { return std::bit_cast<double>(get_le<std::uint64_t>()); }

    bool at_eof() {
        in_.peek();
        return in_.eof();
    }

  private:
    template <typename U>
    U get_le() {
        unsigned char b[sizeof(U)];
        bytes(b, sizeof(U));
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i)
            v |= static_cast<U>(b[i]) << (8 * i);
        return v;
    }

    std::ifstream in_;
};

} // namespace csipred

#endif
