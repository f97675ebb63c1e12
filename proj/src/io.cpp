#include "mgs/io.hpp"

#include "mgs/binio.hpp"

namespace mgs {

void save_gaussians(const std::string& path, const GaussianSet& set) {
    ByteWriter payload;
    for (const auto& g : set.g) {
        for (float f : g.u) payload.put_f32(f);
        for (float f : g.q) payload.put_f32(f);
        for (float f : g.s) payload.put_f32(f);
        payload.put_f32(g.o);
        for (float f : g.sh) payload.put_f32(f);
    }
    ByteWriter w;
    w.put_magic("MGSPLY1");
    w.put_u32(uint32_t(set.g.size()));
    w.put_u32(crc32_of(payload.bytes.data(), payload.bytes.size()));
    w.bytes.insert(w.bytes.end(), payload.bytes.begin(), payload.bytes.end());
    write_file_atomic(path, w.bytes);
}

GaussianSet load_gaussians(const std::string& path) {
    std::vector<uint8_t> bytes = read_file(path);
    ByteReader r(bytes, path);
    r.expect_magic("MGSPLY1");
    uint32_t count = r.get_u32();
    uint32_t crc = r.get_u32();
    if (bytes.size() != 16 + size_t(count) * 92)
        r.fail("size mismatch, expected " + std::to_string(16 + size_t(count) * 92) +
               " bytes for " + std::to_string(count) + " gaussians, got " +
               std::to_string(bytes.size()));
    if (crc32_of(bytes.data() + 16, bytes.size() - 16) != crc) r.fail("payload CRC mismatch");
    GaussianSet set;
    set.g.resize(count);
    for (auto& g : set.g) {
        for (float& f : g.u) f = r.get_f32();
        for (float& f : g.q) f = r.get_f32();
        for (float& f : g.s) f = r.get_f32();
        g.o = r.get_f32();
        for (float& f : g.sh) f = r.get_f32();
    }
    r.expect_end();
    set.recompute_bbox();
    return set;
}

namespace {

void put_index_list(ByteWriter& w, const IndexSet& s) {
    w.put_u32(uint32_t(s.size()));
    int64_t prev = -1;
    for (int32_t idx : s) {
        w.put_varint(uint64_t(int64_t(idx) - prev));  // gaps are >= 1 for sorted unique lists
        prev = idx;
    }
}

IndexSet get_index_list(ByteReader& r) {
    uint32_t n = r.get_u32();
    if (n > (1u << 26)) r.fail("implausible index count");
    IndexSet s(n);
    int64_t prev = -1;
    for (uint32_t i = 0; i < n; i++) {
        uint64_t gap = r.get_varint();
        if (gap == 0) r.fail("index list not strictly increasing");
        prev += int64_t(gap);
        if (prev > INT32_MAX) r.fail("index overflow");
        s[i] = int32_t(prev);
    }
    return s;
}

std::vector<uint8_t> encode_delta_payload(const FrameDelta& d) {
    ByteWriter w;
    put_index_list(w, d.g_m);
    for (size_t i = 0; i < d.g_m.size(); i++) {
        for (float f : d.du[i]) w.put_f32(f);
        for (float f : d.dq[i]) w.put_f32(f);
    }
    put_index_list(w, d.g_new);
    for (size_t i = 0; i < d.g_new.size(); i++)
        for (float f : d.dsh[i]) w.put_f32(f);
    return w.bytes;
}

void check_delta(const FrameDelta& d) {
    if (!is_sorted_unique(d.g_m) || !is_sorted_unique(d.g_new))
        throw ContractViolation("delta index lists must be sorted and duplicate-free");
    if (!index_subset(d.g_new, d.g_m))
        throw ContractViolation("g_new must be a subset of g_m");
    if (d.du.size() != d.g_m.size() || d.dq.size() != d.g_m.size() ||
        d.dsh.size() != d.g_new.size())
        throw ContractViolation("delta record counts do not match index lists");
}

} // namespace

std::vector<uint8_t> encode_delta(const FrameDelta& d) {
    check_delta(d);
    std::vector<uint8_t> payload = encode_delta_payload(d);
    ByteWriter w;
    w.put_magic("MGSDLT1");
    w.put_u32(uint32_t(d.frame_index));
    w.put_u32(crc32_of(payload.data(), payload.size()));
    w.bytes.insert(w.bytes.end(), payload.begin(), payload.end());
    return w.bytes;
}

size_t delta_encoded_size(const FrameDelta& d) { return encode_delta(d).size(); }

void save_delta(const std::string& path, const FrameDelta& d) {
    write_file_atomic(path, encode_delta(d));
}

FrameDelta load_delta(const std::string& path) {
    std::vector<uint8_t> bytes = read_file(path);
    ByteReader r(bytes, path);
    r.expect_magic("MGSDLT1");
    FrameDelta d;
    d.frame_index = int32_t(r.get_u32());
    uint32_t crc = r.get_u32();
    if (crc32_of(bytes.data() + 16, bytes.size() - 16) != crc) r.fail("payload CRC mismatch");
    d.g_m = get_index_list(r);
    d.du.resize(d.g_m.size());
    d.dq.resize(d.g_m.size());
    for (size_t i = 0; i < d.g_m.size(); i++) {
        for (float& f : d.du[i]) f = r.get_f32();
        for (float& f : d.dq[i]) f = r.get_f32();
    }
    d.g_new = get_index_list(r);
    d.dsh.resize(d.g_new.size());
    for (size_t i = 0; i < d.g_new.size(); i++)
        for (float& f : d.dsh[i]) f = r.get_f32();
    r.expect_end();
    if (!index_subset(d.g_new, d.g_m)) r.fail("g_new is not a subset of g_m");
    return d;
}

GaussianSet apply_delta(const GaussianSet& prev, const FrameDelta& d) {
    check_delta(d);
    GaussianSet out = prev;
    for (size_t i = 0; i < d.g_m.size(); i++) {
        int32_t idx = d.g_m[i];
        if (idx < 0 || size_t(idx) >= out.g.size())
            throw FormatError("delta index " + std::to_string(idx) + " out of range");
        Gaussian3D& g = out.g[idx];
        for (int k = 0; k < 3; k++) g.u[k] = float(double(g.u[k]) + double(d.du[i][k]));
        // Exact-zero rotation update keeps q untouched bitwise; renormalizing
        // would jitter the low mantissa bits of an already-stored quaternion.
        if (d.dq[i][0] != 0.f || d.dq[i][1] != 0.f || d.dq[i][2] != 0.f || d.dq[i][3] != 0.f) {
            Quat dq{1.0 + double(d.dq[i][0]), double(d.dq[i][1]), double(d.dq[i][2]),
                    double(d.dq[i][3])};
            if (dq.norm() < 1e-8) throw DegenerateInput("rotation update norm below 1e-8");
            Quat qn = quat_normalize(quat_multiply(g.rot(), quat_normalize(dq)));
            g.q = {float(qn.w), float(qn.x), float(qn.y), float(qn.z)};
        }
    }
    for (size_t i = 0; i < d.g_new.size(); i++) {
        Gaussian3D& g = out.g[d.g_new[i]];
        for (int k = 0; k < 12; k++) g.sh[k] = float(double(g.sh[k]) + double(d.dsh[i][k]));
    }
    return out;
}

} // namespace mgs
