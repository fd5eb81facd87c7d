#pragma once

// Little-endian byte writer/reader used by the wire and file containers.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "coexist/error.hpp"

namespace coexist::io {

using Bytes = std::vector<std::uint8_t>;

class Writer {
public:
    void magic(std::string_view m) {
        for (char c : m) buf_.push_back(static_cast<std::uint8_t>(c));
    }
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u16(std::uint16_t v) { put(v); }
    void u32(std::uint32_t v) { put(v); }
    void u64(std::uint64_t v) { put(v); }
    void f64(double v) { put(std::bit_cast<std::uint64_t>(v)); }

    const Bytes& bytes() const& { return buf_; }
    Bytes bytes() && { return std::move(buf_); }

private:
    template <typename T>
    void put(T v) {
        for (std::size_t i = 0; i < sizeof(T); ++i)
            buf_.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFFu));
    }
    Bytes buf_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

    void expect_magic(std::string_view m) {
        need(m.size());
        if (std::memcmp(data_.data() + pos_, m.data(), m.size()) != 0)
            throw FormatError("bad magic, expected " + std::string(m));
        pos_ += m.size();
    }
    std::uint8_t u8() {
        need(1);
        return data_[pos_++];
    }
    std::uint16_t u16() { return get<std::uint16_t>(); }
    std::uint32_t u32() { return get<std::uint32_t>(); }
    std::uint64_t u64() { return get<std::uint64_t>(); }
    double f64() { return std::bit_cast<double>(get<std::uint64_t>()); }

    std::size_t remaining() const { return data_.size() - pos_; }
    void expect_end() const {
        if (remaining() != 0) throw FormatError("trailing bytes in container");
    }

private:
    void need(std::size_t n) const {
        if (remaining() < n) throw FormatError("truncated container");
    }
    template <typename T>
    T get() {
        need(sizeof(T));
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i)
            v |= static_cast<T>(static_cast<T>(data_[pos_ + i]) << (8 * i));
        pos_ += sizeof(T);
        return v;
    }

    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

inline void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open for writing: " + path);
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw Error("write failed: " + path);
}

inline Bytes read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open for reading: " + path);
    return Bytes(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

}  // namespace coexist::io
