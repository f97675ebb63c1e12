#include "mgs/image.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include <png.h>

#include "mgs/binio.hpp"

namespace mgs {

void save_image(const std::string& path, const Image& img) {
    ByteWriter w;
    w.put_magic("MGSIMG1");
    w.put_u32(uint32_t(img.w));
    w.put_u32(uint32_t(img.h));
    w.put_u32(uint32_t(img.c));
    for (double d : img.v) w.put_f32(float(d));
    write_file_atomic(path, w.bytes);
}

Image load_image(const std::string& path) {
    std::vector<uint8_t> bytes = read_file(path);
    ByteReader r(bytes, path);
    r.expect_magic("MGSIMG1");
    uint32_t w = r.get_u32(), h = r.get_u32(), c = r.get_u32();
    if (w == 0 || h == 0 || c == 0 || w > 1u << 16 || h > 1u << 16 || c > 16)
        r.fail("implausible dimensions");
    Image img{int(w), int(h), int(c)};
    for (double& d : img.v) d = r.get_f32();
    r.expect_end();
    return img;
}

namespace {

struct PngCtx {
    FILE* f = nullptr;
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngCtx() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        if (f) std::fclose(f);
    }
};

void png_open(PngCtx& ctx, const std::string& path) {
    ctx.f = std::fopen(path.c_str(), "wb");
    if (!ctx.f) throw FormatError(path + ": cannot open for writing");
    ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    ctx.info = ctx.png ? png_create_info_struct(ctx.png) : nullptr;
    if (!ctx.png || !ctx.info) throw FormatError(path + ": libpng init failed");
}

} // namespace

void save_png_rgb8(const std::string& path, const Image& img) {
    if (img.c != 3) throw ContractViolation("save_png_rgb8 needs a 3-channel image");
    PngCtx ctx;
    png_open(ctx, path);
    if (setjmp(png_jmpbuf(ctx.png))) throw FormatError(path + ": libpng write failed");
    png_init_io(ctx.png, ctx.f);
    png_set_IHDR(ctx.png, ctx.info, img.w, img.h, 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(ctx.png, ctx.info);
    std::vector<uint8_t> row(size_t(img.w) * 3);
    for (int y = 0; y < img.h; y++) {
        for (int x = 0; x < img.w; x++)
            for (int ch = 0; ch < 3; ch++) {
                double v = img.at(ch, y, x);
                v = v < 0 ? 0 : (v > 1 ? 1 : v);
                row[size_t(x) * 3 + ch] = uint8_t(std::lround(v * 255.0));
            }
        png_write_row(ctx.png, row.data());
    }
    png_write_end(ctx.png, nullptr);
}

void save_png_mask1(const std::string& path, const BoolMask& mask) {
    PngCtx ctx;
    png_open(ctx, path);
    if (setjmp(png_jmpbuf(ctx.png))) throw FormatError(path + ": libpng write failed");
    png_init_io(ctx.png, ctx.f);
    png_set_IHDR(ctx.png, ctx.info, mask.w, mask.h, 1, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(ctx.png, ctx.info);
    png_set_packing(ctx.png);  // we hand over one pixel per byte
    std::vector<uint8_t> row(size_t(mask.w));
    for (int y = 0; y < mask.h; y++) {
        for (int x = 0; x < mask.w; x++) row[x] = mask.at(y, x) ? 1 : 0;
        png_write_row(ctx.png, row.data());
    }
    png_write_end(ctx.png, nullptr);
}

} // namespace mgs
