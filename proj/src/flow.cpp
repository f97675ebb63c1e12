#include "mgs/flow.hpp"

#include <algorithm>
#include <cmath>

#include "mgs/binio.hpp"
#include "mgs/morphology.hpp"

namespace mgs {

namespace {

struct Gray {
    int w = 0, h = 0;
    std::vector<double> v;
    double at(int y, int x) const {
        return v[size_t(std::clamp(y, 0, h - 1)) * w + std::clamp(x, 0, w - 1)];
    }
    double sample(double x, double y) const {
        x = std::clamp(x, 0.0, double(w - 1));
        y = std::clamp(y, 0.0, double(h - 1));
        int x0 = int(x), y0 = int(y);
        int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
        double fx = x - x0, fy = y - y0;
        return at(y0, x0) * (1 - fx) * (1 - fy) + at(y0, x1) * fx * (1 - fy) +
               at(y1, x0) * (1 - fx) * fy + at(y1, x1) * fx * fy;
    }
};

Gray to_gray(const Image& img) {
    Gray g;
    g.w = img.w;
    g.h = img.h;
    g.v.resize(size_t(img.w) * img.h);
    for (int y = 0; y < img.h; y++)
        for (int x = 0; x < img.w; x++) {
            double s = 0;
            for (int c = 0; c < img.c; c++) s += img.at(c, y, x);
            g.v[size_t(y) * img.w + x] = s / img.c;
        }
    return g;
}

Gray downsample(const Gray& g) {
    Gray d;
    d.w = std::max(1, g.w / 2);
    d.h = std::max(1, g.h / 2);
    d.v.resize(size_t(d.w) * d.h);
    for (int y = 0; y < d.h; y++)
        for (int x = 0; x < d.w; x++)
            d.v[size_t(y) * d.w + x] = 0.25 * (g.at(2 * y, 2 * x) + g.at(2 * y, 2 * x + 1) +
                                               g.at(2 * y + 1, 2 * x) + g.at(2 * y + 1, 2 * x + 1));
    return d;
}

constexpr int kLkWindow = 4;  // 9x9
constexpr int kLkIters = 3;

void lk_refine(const Gray& a, const Gray& b, FlowField& flow) {
    // Spatial gradients of the source frame, central differences.
    std::vector<double> ix(size_t(a.w) * a.h), iy(ix.size());
    for (int y = 0; y < a.h; y++)
        for (int x = 0; x < a.w; x++) {
            ix[size_t(y) * a.w + x] = 0.5 * (a.at(y, x + 1) - a.at(y, x - 1));
            iy[size_t(y) * a.w + x] = 0.5 * (a.at(y + 1, x) - a.at(y - 1, x));
        }
    for (int iter = 0; iter < kLkIters; iter++) {
#pragma omp parallel for schedule(static)
        for (int y = 0; y < a.h; y++)
            for (int x = 0; x < a.w; x++) {
                double gxx = 0, gxy = 0, gyy = 0, bx = 0, by = 0;
                Vec2& f = flow.at(y, x);
                for (int dy = -kLkWindow; dy <= kLkWindow; dy++)
                    for (int dx = -kLkWindow; dx <= kLkWindow; dx++) {
                        int px = std::clamp(x + dx, 0, a.w - 1);
                        int py = std::clamp(y + dy, 0, a.h - 1);
                        double gx = ix[size_t(py) * a.w + px];
                        double gy = iy[size_t(py) * a.w + px];
                        double it = b.sample(px + f.x, py + f.y) - a.at(py, px);
                        gxx += gx * gx;
                        gxy += gx * gy;
                        gyy += gy * gy;
                        bx -= gx * it;
                        by -= gy * it;
                    }
                // Smaller eigenvalue guard against the aperture problem.
                double mid = 0.5 * (gxx + gyy);
                double det = gxx * gyy - gxy * gxy;
                double mineig = mid - std::sqrt(std::max(0.0, mid * mid - det));
                if (mineig < 1e-6) continue;
                f.x += (gyy * bx - gxy * by) / det;
                f.y += (gxx * by - gxy * bx) / det;
            }
    }
}

} // namespace

FlowField estimate_flow(const Image& a, const Image& b, int levels) {
    if (!a.same_shape(b)) throw ContractViolation("estimate_flow: image shapes differ");
    if (levels < 1) throw ContractViolation("estimate_flow: levels must be >= 1");
    std::vector<Gray> pa{to_gray(a)}, pb{to_gray(b)};
    while (int(pa.size()) < levels && pa.back().w >= 24 && pa.back().h >= 24) {
        pa.push_back(downsample(pa.back()));
        pb.push_back(downsample(pb.back()));
    }
    int top = int(pa.size()) - 1;
    FlowField flow(pa[top].w, pa[top].h);
    for (int l = top; l >= 0; l--) {
        if (l != top) {
            // Upsample: bilinear on the coarse field, doubled.
            const FlowField coarse = flow;
            flow = FlowField(pa[l].w, pa[l].h);
            for (int y = 0; y < flow.h; y++)
                for (int x = 0; x < flow.w; x++) {
                    double cx = std::clamp(0.5 * x, 0.0, double(coarse.w - 1));
                    double cy = std::clamp(0.5 * y, 0.0, double(coarse.h - 1));
                    int x0 = int(cx), y0 = int(cy);
                    int x1 = std::min(x0 + 1, coarse.w - 1), y1 = std::min(y0 + 1, coarse.h - 1);
                    double fx = cx - x0, fy = cy - y0;
                    Vec2 v = coarse.at(y0, x0) * ((1 - fx) * (1 - fy)) +
                             coarse.at(y0, x1) * (fx * (1 - fy)) +
                             coarse.at(y1, x0) * ((1 - fx) * fy) + coarse.at(y1, x1) * (fx * fy);
                    flow.at(y, x) = v * 2.0;
                }
        }
        lk_refine(pa[l], pb[l], flow);
    }
    return flow;
}

void save_flow(const std::string& path, const FlowField& f) {
    ByteWriter w;
    w.put_magic("MGSFLO1");
    w.put_u32(uint32_t(f.w));
    w.put_u32(uint32_t(f.h));
    for (const Vec2& v : f.v) {
        w.put_f32(float(v.x));
        w.put_f32(float(v.y));
    }
    write_file_atomic(path, w.bytes);
}

FlowField load_flow(const std::string& path) {
    std::vector<uint8_t> bytes = read_file(path);
    ByteReader r(bytes, path);
    r.expect_magic("MGSFLO1");
    uint32_t w = r.get_u32(), h = r.get_u32();
    if (w == 0 || h == 0 || w > 65536 || h > 65536) r.fail("implausible flow dimensions");
    FlowField f{int(w), int(h)};
    for (Vec2& v : f.v) {
        v.x = r.get_f32();
        v.y = r.get_f32();
    }
    r.expect_end();
    return f;
}

BoolMask flow_mask(const FlowField& f, double tau) {
    if (tau <= 0) throw ContractViolation("flow_mask: tau must be > 0");
    BoolMask m(f.w, f.h);
    for (int y = 0; y < f.h; y++)
        for (int x = 0; x < f.w; x++) m.at(y, x) = f.at(y, x).norm() > tau ? 1 : 0;
    return m;
}

BoolMask temporal_diff_mask(const Image& i_t, const Image& i_prev, double thresh, int kernel) {
    if (!i_t.same_shape(i_prev)) throw ContractViolation("temporal_diff_mask: shapes differ");
    BoolMask m(i_t.w, i_t.h);
    for (int y = 0; y < i_t.h; y++)
        for (int x = 0; x < i_t.w; x++) {
            double d = 0;
            for (int c = 0; c < i_t.c; c++)
                d = std::max(d, std::abs(i_t.at(c, y, x) - i_prev.at(c, y, x)));
            m.at(y, x) = d * 255.0 > thresh ? 1 : 0;
        }
    return closing(m, kernel);
}

BoolMask motion_mask(const BoolMask& flow_m, const BoolMask& diff_m) {
    if (flow_m.w != diff_m.w || flow_m.h != diff_m.h)
        throw ContractViolation("motion_mask: mask shapes differ");
    BoolMask m(flow_m.w, flow_m.h);
    for (size_t i = 0; i < m.v.size(); i++) m.v[i] = flow_m.v[i] & diff_m.v[i];
    return m;
}

} // namespace mgs
