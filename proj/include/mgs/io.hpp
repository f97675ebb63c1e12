#pragma once

// Binary containers for Gaussian sets ("MGSPLY1") and per-frame deltas
// ("MGSDLT1"), plus the delta application shared by the live stream and
// replay so both produce bit-identical states.

#include <string>

#include "mgs/gaussian.hpp"
#include "mgs/indexset.hpp"

namespace mgs {

// Gaussian set container. Layout:
//   magic "MGSPLY1\0" (8 bytes), u32 count, u32 crc32 of the payload,
//   then per Gaussian 23 float32 little-endian: u[3] q[4] s[3] o sh[12].
// File size is exactly 16 + 92*count bytes.
void save_gaussians(const std::string& path, const GaussianSet& set);
GaussianSet load_gaussians(const std::string& path);

// Per-frame update. g_m carries rigid updates (du[3], dq[4] as float32), the
// subset g_new carries SH offsets (dsh[12]). Invariant: g_new is a subset of
// g_m and both lists are sorted and duplicate-free.
struct FrameDelta {
    int32_t frame_index = 0;
    IndexSet g_m;
    IndexSet g_new;
    std::vector<std::array<float, 3>> du;   // per g_m entry
    std::vector<std::array<float, 4>> dq;   // per g_m entry
    std::vector<std::array<float, 12>> dsh; // per g_new entry
};

// Layout: magic "MGSDLT1\0", u32 frame_index, u32 crc32 of the payload, then
// payload = u32 |g_m|, gap-encoded varints, |g_m| x 7 float32, u32 |g_new|,
// gap-encoded varints, |g_new| x 12 float32.
std::vector<uint8_t> encode_delta(const FrameDelta& d);
void save_delta(const std::string& path, const FrameDelta& d);
FrameDelta load_delta(const std::string& path);

// Exact payload size of the encoded file, in bytes.
size_t delta_encoded_size(const FrameDelta& d);

// Applies a delta: u += du; q <- normalize(q x normalize(1+dqw, dqx, dqy, dqz));
// sh += dsh for g_new members. Arithmetic is double, results are rounded to
// float32 storage, so replaying a saved delta reproduces the live state
// bit-for-bit. Throws DegenerateInput when a rotation update has norm < 1e-8,
// FormatError on out-of-range indices.
GaussianSet apply_delta(const GaussianSet& prev, const FrameDelta& d);

} // namespace mgs
