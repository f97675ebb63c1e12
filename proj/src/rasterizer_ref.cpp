#include "mgs/rasterizer_ref.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mgs {

namespace {

// 3x3 helpers on plain arrays, independent of Mat3.
using M33 = std::array<double, 9>;

M33 mul33(const M33& a, const M33& b) {
    M33 r{};
    for (int i = 0; i < 3; i++)
        for (int j = 0; j < 3; j++)
            for (int k = 0; k < 3; k++) r[i * 3 + j] += a[i * 3 + k] * b[k * 3 + j];
    return r;
}

M33 tr33(const M33& a) {
    return {a[0], a[3], a[6], a[1], a[4], a[7], a[2], a[5], a[8]};
}

// Rotation from a quaternion via R = (w^2 - |v|^2) I + 2 v v^T + 2 w [v]x.
M33 rot_from_quat(double w, double x, double y, double z) {
    double n = std::sqrt(w * w + x * x + y * y + z * z);
    w /= n; x /= n; y /= n; z /= n;
    double s = w * w - (x * x + y * y + z * z);
    M33 r{};
    double v[3] = {x, y, z};
    for (int i = 0; i < 3; i++)
        for (int j = 0; j < 3; j++) r[i * 3 + j] = 2.0 * v[i] * v[j] + (i == j ? s : 0.0);
    r[1] += -2.0 * w * z; r[2] += 2.0 * w * y;
    r[3] += 2.0 * w * z;  r[5] += -2.0 * w * x;
    r[6] += -2.0 * w * y; r[7] += 2.0 * w * x;
    return r;
}

struct RefSplat {
    double mx, my;          // 2d mean
    double ca, cb, cc;      // 2d covariance (incl. low-pass)
    double depth;
    double color[3];        // clamped
    double opacity;
    int32_t id;
};

std::vector<RefSplat> ref_project(const GaussianSet& set, const Camera& cam) {
    std::vector<RefSplat> sp;
    for (int32_t i = 0; i < int32_t(set.g.size()); i++) {
        const Gaussian3D& g = set.g[i];
        double pw[3] = {g.u[0], g.u[1], g.u[2]};
        double pc[3];
        for (int r = 0; r < 3; r++)
            pc[r] = cam.R(r, 0) * pw[0] + cam.R(r, 1) * pw[1] + cam.R(r, 2) * pw[2] +
                    (r == 0 ? cam.t.x : r == 1 ? cam.t.y : cam.t.z);
        if (pc[2] <= kNearPlane) continue;
        if (g.o < kAlphaSkip) continue;

        RefSplat s;
        s.id = i;
        s.depth = pc[2];
        s.opacity = g.o;
        s.mx = cam.fx * pc[0] / pc[2] + cam.cx;
        s.my = cam.fy * pc[1] / pc[2] + cam.cy;

        M33 R = rot_from_quat(g.q[0], g.q[1], g.q[2], g.q[3]);
        M33 D{};
        D[0] = double(g.s[0]) * g.s[0];
        D[4] = double(g.s[1]) * g.s[1];
        D[8] = double(g.s[2]) * g.s[2];
        M33 sigma = mul33(mul33(R, D), tr33(R));

        M33 W{};
        for (int r = 0; r < 3; r++)
            for (int c = 0; c < 3; c++) W[r * 3 + c] = cam.R(r, c);
        double J[6] = {cam.fx / pc[2], 0, -cam.fx * pc[0] / (pc[2] * pc[2]),
                       0, cam.fy / pc[2], -cam.fy * pc[1] / (pc[2] * pc[2])};
        // cov2d = J W sigma W^T J^T (2x3 * 3x3 * 3x2), then the low-pass term.
        M33 ws = mul33(W, mul33(sigma, tr33(W)));
        double cov[3] = {0, 0, 0};  // a, b, c
        for (int k = 0; k < 3; k++)
            for (int l = 0; l < 3; l++) {
                cov[0] += J[k] * ws[k * 3 + l] * J[l];
                cov[1] += J[k] * ws[k * 3 + l] * J[3 + l];
                cov[2] += J[3 + k] * ws[k * 3 + l] * J[3 + l];
            }
        s.ca = cov[0] + 0.3;
        s.cb = cov[1];
        s.cc = cov[2] + 0.3;

        // View direction from the camera origin in world space.
        double cc_w[3];
        for (int r = 0; r < 3; r++)
            cc_w[r] = -(cam.R(0, r) * cam.t.x + cam.R(1, r) * cam.t.y + cam.R(2, r) * cam.t.z);
        double d[3] = {pw[0] - cc_w[0], pw[1] - cc_w[1], pw[2] - cc_w[2]};
        double dn = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
        for (double& v : d) v /= dn;
        double basis[4] = {kShC0, -kShC1 * d[1], kShC1 * d[2], -kShC1 * d[0]};
        for (int ch = 0; ch < 3; ch++) {
            double v = 0;
            for (int k = 0; k < 4; k++) v += basis[k] * g.sh[ch * 4 + k];
            s.color[ch] = std::min(1.0, std::max(0.0, v));
        }
        sp.push_back(s);
    }
    std::sort(sp.begin(), sp.end(), [](const RefSplat& a, const RefSplat& b) {
        if (a.depth != b.depth) return a.depth < b.depth;
        return a.id < b.id;
    });
    return sp;
}

double ref_alpha(const RefSplat& s, double px, double py) {
    double dx = px - s.mx, dy = py - s.my;
    double det = s.ca * s.cc - s.cb * s.cb;
    double q = (s.cc * dx * dx - 2.0 * s.cb * dx * dy + s.ca * dy * dy) / det;
    double a = s.opacity * std::exp(-0.5 * q);
    if (a > kAlphaClamp) a = kAlphaClamp;
    return a < kAlphaSkip ? 0.0 : a;
}

} // namespace

RenderedImage ref_render(const GaussianSet& set, const Camera& cam, const RenderOptions& opt) {
    std::vector<RefSplat> sp = ref_project(set, cam);
    RenderedImage out;
    out.rgb = Image(cam.width, cam.height, 3);
    out.transmittance.assign(size_t(cam.width) * cam.height, 1.0);
    for (int y = 0; y < cam.height; y++)
        for (int x = 0; x < cam.width; x++) {
            double T = 1.0, acc[3] = {0, 0, 0};
            for (const RefSplat& s : sp) {
                double a = ref_alpha(s, x, y);
                if (a == 0.0) continue;
                for (int ch = 0; ch < 3; ch++) acc[ch] += a * T * s.color[ch];
                T *= 1.0 - a;
            }
            const double bg[3] = {opt.background.x, opt.background.y, opt.background.z};
            for (int ch = 0; ch < 3; ch++) out.rgb.at(ch, y, x) = acc[ch] + T * bg[ch];
            out.transmittance[size_t(y) * cam.width + x] = T;
        }
    return out;
}

GimBuffer ref_render_gim(const GaussianSet& set, const Camera& cam, int top_n) {
    if (top_n < 1 || top_n > 5) throw ContractViolation("ref_render_gim top_n must be in [1,5]");
    std::vector<RefSplat> sp = ref_project(set, cam);
    GimBuffer gim(cam.width, cam.height, top_n);
    struct Entry {
        double w, depth;
        int32_t id;
    };
    std::vector<Entry> entries;
    for (int y = 0; y < cam.height; y++)
        for (int x = 0; x < cam.width; x++) {
            entries.clear();
            double T = 1.0;
            for (const RefSplat& s : sp) {
                double a = ref_alpha(s, x, y);
                if (a == 0.0) continue;
                entries.push_back({a * T, s.depth, s.id});
                T *= 1.0 - a;
            }
            std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
                if (a.w != b.w) return a.w > b.w;
                if (a.depth != b.depth) return a.depth < b.depth;
                return a.id < b.id;
            });
            int cnt = std::min<int>(top_n, int(entries.size()));
            size_t base = (size_t(y) * cam.width + x) * top_n;
            gim.counts[size_t(y) * cam.width + x] = uint8_t(cnt);
            for (int k = 0; k < cnt; k++) {
                gim.ids[base + k] = entries[k].id;
                gim.weights[base + k] = entries[k].w;
            }
        }
    return gim;
}

} // namespace mgs
