#include "mgs/binio.hpp"

#include <cstdio>
#include <filesystem>

#include <zlib.h>

namespace mgs {

std::vector<uint8_t> read_file(const std::string& path) {
    FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw FormatError(path + ": cannot open");
    std::fseek(f, 0, SEEK_END);
    long n = std::ftell(f);
    std::fseek(f, 0, SEEK_SET);
    std::vector<uint8_t> bytes(size_t(n < 0 ? 0 : n));
    size_t got = bytes.empty() ? 0 : std::fread(bytes.data(), 1, bytes.size(), f);
    std::fclose(f);
    if (got != bytes.size()) throw FormatError(path + ": short read");
    return bytes;
}

static void write_raw(const std::string& path, const void* data, size_t n) {
    std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::string tmp = path + ".tmp";
    FILE* f = std::fopen(tmp.c_str(), "wb");
    if (!f) throw FormatError(tmp + ": cannot open for writing");
    size_t put = n ? std::fwrite(data, 1, n, f) : 0;
    int flushed = std::fflush(f);
    std::fclose(f);
    if (put != n || flushed != 0) {
        std::remove(tmp.c_str());
        throw FormatError(tmp + ": short write");
    }
    std::filesystem::rename(tmp, path);
}

void write_file_atomic(const std::string& path, const std::vector<uint8_t>& bytes) {
    write_raw(path, bytes.data(), bytes.size());
}

void write_file_atomic(const std::string& path, const std::string& text) {
    write_raw(path, text.data(), text.size());
}

uint32_t crc32_of(const uint8_t* data, size_t n) {
    return uint32_t(::crc32(0L, data, uInt(n)));
}

} // namespace mgs
