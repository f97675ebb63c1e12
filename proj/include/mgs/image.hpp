#pragma once

// Planar float images and binary masks, with the raw float32 container format
// ("MGSIMG1") and 8-bit / 1-bit PNG export.

#include <cstdint>
#include <string>
#include <vector>

#include "mgs/errors.hpp"

namespace mgs {

// Planar layout: channel 0 rows, then channel 1 rows, ... Values are double
// in memory; the file format stores float32.
struct Image {
    int w = 0, h = 0, c = 0;
    std::vector<double> v;

    Image() = default;
    Image(int w_, int h_, int c_) : w(w_), h(h_), c(c_), v(size_t(w_) * h_ * c_, 0.0) {}

    double& at(int ch, int y, int x) { return v[(size_t(ch) * h + y) * w + x]; }
    double at(int ch, int y, int x) const { return v[(size_t(ch) * h + y) * w + x]; }
    bool same_shape(const Image& o) const { return w == o.w && h == o.h && c == o.c; }
};

struct BoolMask {
    int w = 0, h = 0;
    std::vector<uint8_t> v;

    BoolMask() = default;
    BoolMask(int w_, int h_, uint8_t fill = 0) : w(w_), h(h_), v(size_t(w_) * h_, fill) {}

    uint8_t& at(int y, int x) { return v[size_t(y) * w + x]; }
    uint8_t at(int y, int x) const { return v[size_t(y) * w + x]; }
    size_t count() const {
        size_t n = 0;
        for (uint8_t b : v) n += (b != 0);
        return n;
    }
};

// Raw float32 container: magic "MGSIMG1\0", u32 width, u32 height,
// u32 channels, then planar float32 little-endian.
void save_image(const std::string& path, const Image& img);
Image load_image(const std::string& path);

// 8-bit RGB PNG; values clamped to [0,1] and quantized with round(v*255).
void save_png_rgb8(const std::string& path, const Image& img);
// 1-bit grayscale PNG.
void save_png_mask1(const std::string& path, const BoolMask& mask);

} // namespace mgs
