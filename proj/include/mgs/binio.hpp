#pragma once

// Little-endian byte packing, LEB128 varints, and atomic file IO shared by
// every binary container in the project. Readers throw FormatError with the
// byte offset of the failure.

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "mgs/errors.hpp"

namespace mgs {

class ByteWriter {
public:
    std::vector<uint8_t> bytes;

    void put_u8(uint8_t v) { bytes.push_back(v); }
    void put_u32(uint32_t v) {
        bytes.push_back(uint8_t(v));
        bytes.push_back(uint8_t(v >> 8));
        bytes.push_back(uint8_t(v >> 16));
        bytes.push_back(uint8_t(v >> 24));
    }
    void put_f32(float v) { put_u32(std::bit_cast<uint32_t>(v)); }
    void put_f64(double v) {
        uint64_t u = std::bit_cast<uint64_t>(v);
        put_u32(uint32_t(u));
        put_u32(uint32_t(u >> 32));
    }
    void put_varint(uint64_t v) {
        while (v >= 0x80) {
            bytes.push_back(uint8_t(v) | 0x80);
            v >>= 7;
        }
        bytes.push_back(uint8_t(v));
    }
    // Exactly 8 bytes: up to 7 magic characters, NUL padded.
    void put_magic(const char* magic) {
        size_t n = std::strlen(magic);
        for (size_t i = 0; i < 8; i++) bytes.push_back(i < n ? uint8_t(magic[i]) : 0);
    }
};

class ByteReader {
public:
    ByteReader(const uint8_t* data, size_t size, std::string name = "")
        : d_(data), n_(size), name_(std::move(name)) {}
    explicit ByteReader(const std::vector<uint8_t>& b, std::string name = "")
        : ByteReader(b.data(), b.size(), std::move(name)) {}

    size_t offset() const { return off_; }
    size_t remaining() const { return n_ - off_; }

    uint8_t get_u8() {
        need(1);
        return d_[off_++];
    }
    uint32_t get_u32() {
        need(4);
        uint32_t v = uint32_t(d_[off_]) | uint32_t(d_[off_ + 1]) << 8 |
                     uint32_t(d_[off_ + 2]) << 16 | uint32_t(d_[off_ + 3]) << 24;
        off_ += 4;
        return v;
    }
    float get_f32() { return std::bit_cast<float>(get_u32()); }
    double get_f64() {
        uint64_t lo = get_u32(), hi = get_u32();
        return std::bit_cast<double>(lo | hi << 32);
    }
    uint64_t get_varint() {
        uint64_t v = 0;
        int shift = 0;
        for (;;) {
            uint8_t b = get_u8();
            v |= uint64_t(b & 0x7f) << shift;
            if (!(b & 0x80)) return v;
            shift += 7;
            if (shift >= 64) fail("varint overflow");
        }
    }
    void expect_magic(const char* magic) {
        size_t at = off_;
        need(8);
        char got[9] = {};
        std::memcpy(got, d_ + off_, 8);
        size_t n = std::strlen(magic);
        bool ok = true;
        for (size_t i = 0; i < 8; i++) {
            uint8_t want = i < n ? uint8_t(magic[i]) : 0;
            if (d_[off_ + i] != want) ok = false;
        }
        if (!ok) {
            off_ = at;
            fail(std::string("bad magic, expected \"") + magic + "\"");
        }
        off_ += 8;
    }
    void expect_end() {
        if (off_ != n_) fail("trailing bytes");
    }
    const uint8_t* raw(size_t count) {
        need(count);
        const uint8_t* p = d_ + off_;
        off_ += count;
        return p;
    }
    [[noreturn]] void fail(const std::string& what) const {
        throw FormatError((name_.empty() ? std::string("<buffer>") : name_) + ": " + what +
                          " at byte " + std::to_string(off_));
    }

private:
    void need(size_t k) const {
        if (off_ + k > n_) fail("truncated, need " + std::to_string(k) + " bytes");
    }
    const uint8_t* d_;
    size_t n_;
    size_t off_ = 0;
    std::string name_;
};

std::vector<uint8_t> read_file(const std::string& path);
// Writes to <path>.tmp then renames, so readers never observe partial files.
void write_file_atomic(const std::string& path, const std::vector<uint8_t>& bytes);
void write_file_atomic(const std::string& path, const std::string& text);

uint32_t crc32_of(const uint8_t* data, size_t n);

} // namespace mgs
