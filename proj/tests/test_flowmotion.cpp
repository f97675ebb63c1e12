#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "mgs/flow.hpp"
#include "mgs/image.hpp"
#include "mgs/morphology.hpp"
#include "mgs/rng.hpp"

using namespace mgs;

namespace {

// Naive morphology oracle, written straight from the documented window
// convention: dilation reads offsets [-k/2, k-1-k/2] on both axes with
// replicate borders, erosion the mirrored range.
BoolMask naive_dilate(const BoolMask& m, int k) {
    int lo = -(k / 2), hi = k - 1 - k / 2;
    BoolMask out(m.w, m.h);
    for (int y = 0; y < m.h; ++y)
        for (int x = 0; x < m.w; ++x) {
            uint8_t v = 0;
            for (int dy = lo; dy <= hi && !v; ++dy)
                for (int dx = lo; dx <= hi && !v; ++dx) {
                    int yy = std::clamp(y + dy, 0, m.h - 1);
                    int xx = std::clamp(x + dx, 0, m.w - 1);
                    v = m.at(yy, xx);
                }
            out.at(y, x) = v;
        }
    return out;
}

BoolMask naive_erode(const BoolMask& m, int k) {
    int lo = -(k - 1 - k / 2), hi = k / 2;
    BoolMask out(m.w, m.h);
    for (int y = 0; y < m.h; ++y)
        for (int x = 0; x < m.w; ++x) {
            uint8_t v = 1;
            for (int dy = lo; dy <= hi && v; ++dy)
                for (int dx = lo; dx <= hi && v; ++dx) {
                    int yy = std::clamp(y + dy, 0, m.h - 1);
                    int xx = std::clamp(x + dx, 0, m.w - 1);
                    v = m.at(yy, xx);
                }
            out.at(y, x) = v;
        }
    return out;
}

bool masks_equal(const BoolMask& a, const BoolMask& b) {
    return a.w == b.w && a.h == b.h && a.v == b.v;
}

bool mask_subset(const BoolMask& a, const BoolMask& b) {
    for (size_t i = 0; i < a.v.size(); ++i)
        if (a.v[i] && !b.v[i]) return false;
    return true;
}

BoolMask random_mask(Rng& rng, int w, int h, double density) {
    BoolMask m(w, h);
    for (auto& v : m.v) v = rng.uniform() < density ? 1 : 0;
    return m;
}

// Smooth test image: bilinearly upsampled low-resolution noise.
Image smooth_image(Rng& rng, int w, int h, int coarse) {
    std::vector<double> grid(size_t(coarse) * coarse);
    for (double& g : grid) g = rng.uniform(0.1, 0.9);
    Image img(w, h, 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double gx = double(x) / (w - 1) * (coarse - 1);
            double gy = double(y) / (h - 1) * (coarse - 1);
            int x0 = std::min(int(gx), coarse - 2), y0 = std::min(int(gy), coarse - 2);
            double fx = gx - x0, fy = gy - y0;
            double v = grid[size_t(y0) * coarse + x0] * (1 - fx) * (1 - fy) +
                       grid[size_t(y0) * coarse + x0 + 1] * fx * (1 - fy) +
                       grid[size_t(y0 + 1) * coarse + x0] * (1 - fx) * fy +
                       grid[size_t(y0 + 1) * coarse + x0 + 1] * fx * fy;
            for (int c = 0; c < 3; ++c) img.at(c, y, x) = v * (0.6 + 0.2 * c);
        }
    return img;
}

// b(p) = a(p - shift) with bilinear sampling and replicate borders, so the
// forward flow from a to b is exactly `shift` everywhere.
Image shift_image(const Image& a, double sx, double sy) {
    Image b(a.w, a.h, a.c);
    for (int y = 0; y < a.h; ++y)
        for (int x = 0; x < a.w; ++x) {
            double px = std::clamp(x - sx, 0.0, double(a.w - 1));
            double py = std::clamp(y - sy, 0.0, double(a.h - 1));
            int x0 = std::min(int(px), a.w - 2), y0 = std::min(int(py), a.h - 2);
            double fx = px - x0, fy = py - y0;
            for (int c = 0; c < a.c; ++c) {
                double v = a.at(c, y0, x0) * (1 - fx) * (1 - fy) +
                           a.at(c, y0, x0 + 1) * fx * (1 - fy) +
                           a.at(c, y0 + 1, x0) * (1 - fx) * fy +
                           a.at(c, y0 + 1, x0 + 1) * fx * fy;
                b.at(c, y, x) = v;
            }
        }
    return b;
}

} // namespace

TEST_CASE("dilate and erode match the naive oracle") {
    Rng rng(31);
    for (int kernel : {1, 2, 3, 5, 8, 20}) {
        for (int it = 0; it < 6; ++it) {
            BoolMask m = random_mask(rng, 33, 29, it % 2 ? 0.1 : 0.4);
            CHECK(masks_equal(dilate(m, kernel), naive_dilate(m, kernel)));
            CHECK(masks_equal(erode(m, kernel), naive_erode(m, kernel)));
            CHECK(masks_equal(closing(m, kernel), naive_erode(naive_dilate(m, kernel), kernel)));
        }
    }
}

TEST_CASE("closing is extensive and idempotent") {
    Rng rng(32);
    for (int kernel : {2, 3, 20}) {
        for (int it = 0; it < 5; ++it) {
            BoolMask m = random_mask(rng, 41, 37, 0.15);
            BoolMask c1 = closing(m, kernel);
            CHECK(mask_subset(m, c1));
            CHECK(masks_equal(closing(c1, kernel), c1));
        }
    }
}

TEST_CASE("closing fills a one-pixel gap and keeps the extent") {
    // [DERIVED] on a 1x5 row with cells {0,2} set, a 3-window closing gives
    // {0,1,2}: dilation spreads to {0,1,2,3}, erosion keeps cells whose full
    // window is set (cell 0 via the replicated border).
    BoolMask m(5, 1);
    m.at(0, 0) = 1;
    m.at(0, 2) = 1;
    BoolMask c = closing(m, 3);
    CHECK(c.at(0, 0) == 1);
    CHECK(c.at(0, 1) == 1);
    CHECK(c.at(0, 2) == 1);
    CHECK(c.at(0, 3) == 0);
    CHECK(c.at(0, 4) == 0);
}

TEST_CASE("kernel 1 closing is the identity") {
    Rng rng(33);
    BoolMask m = random_mask(rng, 17, 13, 0.3);
    CHECK(masks_equal(closing(m, 1), m));
    CHECK(masks_equal(dilate(m, 1), m));
}

TEST_CASE("flow_mask thresholds the flow norm strictly") {
    FlowField f(3, 1);
    f.at(0, 0) = {0.6, 0.8};    // norm exactly 1
    f.at(0, 1) = {0.8, 0.61};   // norm > 1
    f.at(0, 2) = {-0.2, 0.1};   // norm < 1
    BoolMask m = flow_mask(f, 1.0);
    CHECK(m.at(0, 0) == 0);
    CHECK(m.at(0, 1) == 1);
    CHECK(m.at(0, 2) == 0);
}

TEST_CASE("temporal_diff_mask thresholds the max-channel difference on the 0-255 scale") {
    Image a(3, 1, 3), b(3, 1, 3);
    // pixel 0: difference exactly 10/255 -> strict threshold keeps it off
    b.at(1, 0, 0) = 10.0 / 255.0;
    // pixel 1: 10.2/255 on one channel only
    b.at(2, 0, 1) = 10.2 / 255.0;
    // pixel 2: all channels tiny
    b.at(0, 0, 2) = 1.0 / 255.0;
    BoolMask m = temporal_diff_mask(b, a, 10.0, 1);
    CHECK(m.at(0, 0) == 0);
    CHECK(m.at(0, 1) == 1);
    CHECK(m.at(0, 2) == 0);
}

TEST_CASE("temporal_diff_mask applies the closing") {
    Image a(5, 1, 3), b(5, 1, 3);
    b.at(0, 0, 0) = 0.2;
    b.at(0, 0, 2) = 0.2;
    BoolMask m1 = temporal_diff_mask(b, a, 10.0, 1);
    CHECK(m1.at(0, 1) == 0);
    BoolMask m3 = temporal_diff_mask(b, a, 10.0, 3);
    CHECK(m3.at(0, 0) == 1);
    CHECK(m3.at(0, 1) == 1);  // gap closed
    CHECK(m3.at(0, 2) == 1);
}

TEST_CASE("motion_mask is the pixelwise AND") {
    BoolMask a(2, 2), b(2, 2);
    a.at(0, 0) = 1;
    a.at(0, 1) = 1;
    b.at(0, 1) = 1;
    b.at(1, 0) = 1;
    BoolMask m = motion_mask(a, b);
    CHECK(m.at(0, 0) == 0);
    CHECK(m.at(0, 1) == 1);
    CHECK(m.at(1, 0) == 0);
    CHECK(m.at(1, 1) == 0);
    CHECK(m.count() == 1);
}

TEST_CASE("pyramidal LK recovers integer translations") {
    Rng rng(34);
    Image a = smooth_image(rng, 64, 64, 9);
    Image b = shift_image(a, 3.0, 2.0);
    FlowField f = estimate_flow(a, b, 3);
    // interior pixels away from the replicated border
    std::vector<double> errs;
    for (int y = 12; y < 52; ++y)
        for (int x = 12; x < 52; ++x)
            errs.push_back(std::hypot(f.at(y, x).x - 3.0, f.at(y, x).y - 2.0));
    std::sort(errs.begin(), errs.end());
    CHECK(errs[errs.size() / 2] < 0.15);          // median
    CHECK(errs[errs.size() * 9 / 10] < 0.5);      // 90th percentile
}

TEST_CASE("pyramidal LK recovers subpixel translations") {
    Rng rng(35);
    Image a = smooth_image(rng, 64, 64, 9);
    Image b = shift_image(a, 1.25, -0.75);
    FlowField f = estimate_flow(a, b, 3);
    std::vector<double> errs;
    for (int y = 12; y < 52; ++y)
        for (int x = 12; x < 52; ++x)
            errs.push_back(std::hypot(f.at(y, x).x - 1.25, f.at(y, x).y + 0.75));
    std::sort(errs.begin(), errs.end());
    CHECK(errs[errs.size() / 2] < 0.25);
}

TEST_CASE("identical frames give zero flow") {
    Rng rng(36);
    Image a = smooth_image(rng, 48, 48, 7);
    FlowField f = estimate_flow(a, a, 3);
    double worst = 0;
    for (const Vec2& v : f.v) worst = std::max(worst, std::hypot(v.x, v.y));
    CHECK(worst < 1e-9);
}

TEST_CASE("flow containers round-trip exactly") {
    namespace fs = std::filesystem;
    Rng rng(37);
    FlowField f(7, 5);
    for (Vec2& v : f.v) v = {float(rng.normal()), float(rng.normal())};
    fs::path p = fs::temp_directory_path() / "mgs_test_flow.mgsflo";
    save_flow(p.string(), f);
    FlowField g = load_flow(p.string());
    REQUIRE(g.w == 7);
    REQUIRE(g.h == 5);
    for (size_t i = 0; i < f.v.size(); ++i) {
        CHECK(f.v[i].x == g.v[i].x);
        CHECK(f.v[i].y == g.v[i].y);
    }
    fs::remove(p);
}
