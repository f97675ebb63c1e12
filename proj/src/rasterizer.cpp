#include "mgs/rasterizer.hpp"

#include <algorithm>
#include <cmath>

namespace mgs {

namespace {

struct TileGrid {
    int tx = 0, ty = 0;
    std::vector<std::vector<int>> lists;  // splat indices per tile, depth-sorted
};

struct Prepared {
    std::vector<Splat2D> splats;  // visible only
    TileGrid grid;
};

// Inclusive pixel rect covered by a splat's support radius.
struct Rect {
    int x0, y0, x1, y1;
    bool empty() const { return x0 > x1 || y0 > y1; }
};

Rect splat_rect(const Splat2D& s, int w, int h) {
    Rect r;
    r.x0 = std::max(0, int(std::ceil(s.mean.x - s.radius)));
    r.x1 = std::min(w - 1, int(std::floor(s.mean.x + s.radius)));
    r.y0 = std::max(0, int(std::ceil(s.mean.y - s.radius)));
    r.y1 = std::min(h - 1, int(std::floor(s.mean.y + s.radius)));
    return r;
}

Prepared prepare(const GaussianSet& set, const Camera& cam) {
    Prepared p;
    const int n = int(set.g.size());
    std::vector<Splat2D> all(n);
    std::vector<uint8_t> ok(n, 0);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; i++) ok[i] = project_gaussian(set.g[i], cam, i, &all[i]) ? 1 : 0;
    p.splats.reserve(n);
    for (int i = 0; i < n; i++)
        if (ok[i] && !splat_rect(all[i], cam.width, cam.height).empty())
            p.splats.push_back(all[i]);

    p.grid.tx = (cam.width + kTileSize - 1) / kTileSize;
    p.grid.ty = (cam.height + kTileSize - 1) / kTileSize;
    p.grid.lists.assign(size_t(p.grid.tx) * p.grid.ty, {});
    for (int i = 0; i < int(p.splats.size()); i++) {
        Rect r = splat_rect(p.splats[i], cam.width, cam.height);
        for (int ty = r.y0 / kTileSize; ty <= r.y1 / kTileSize; ty++)
            for (int tx = r.x0 / kTileSize; tx <= r.x1 / kTileSize; tx++)
                p.grid.lists[size_t(ty) * p.grid.tx + tx].push_back(i);
    }
    // Front-to-back order; the sort makes the fill order irrelevant.
    const auto& splats = p.splats;
#pragma omp parallel for schedule(dynamic, 1)
    for (int t = 0; t < int(p.grid.lists.size()); t++) {
        auto& list = p.grid.lists[t];
        std::sort(list.begin(), list.end(), [&splats](int a, int b) {
            if (splats[a].depth != splats[b].depth) return splats[a].depth < splats[b].depth;
            return splats[a].id < splats[b].id;
        });
    }
    return p;
}

} // namespace

double splat_alpha(const Splat2D& s, double px, double py) {
    double dx = px - s.mean.x, dy = py - s.mean.y;
    double power = -0.5 * (s.inv_cov.a * dx * dx + 2.0 * s.inv_cov.b * dx * dy +
                           s.inv_cov.c * dy * dy);
    double a = s.opacity * std::exp(power);
    if (a > kAlphaClamp) a = kAlphaClamp;
    return a < kAlphaSkip ? 0.0 : a;
}

RenderedImage render(const GaussianSet& set, const Camera& cam, const RenderOptions& opt) {
    Prepared p = prepare(set, cam);
    RenderedImage out;
    out.rgb = Image(cam.width, cam.height, 3);
    out.transmittance.assign(size_t(cam.width) * cam.height, 1.0);

    const int ntiles = p.grid.tx * p.grid.ty;
#pragma omp parallel for schedule(dynamic, 1)
    for (int t = 0; t < ntiles; t++) {
        const auto& list = p.grid.lists[t];
        int tx = t % p.grid.tx, ty = t / p.grid.tx;
        int x0 = tx * kTileSize, y0 = ty * kTileSize;
        int x1 = std::min(x0 + kTileSize, cam.width), y1 = std::min(y0 + kTileSize, cam.height);
        for (int y = y0; y < y1; y++)
            for (int x = x0; x < x1; x++) {
                double T = 1.0, r = 0, g = 0, b = 0;
                for (int si : list) {
                    const Splat2D& s = p.splats[si];
                    double a = splat_alpha(s, x, y);
                    if (a == 0.0) continue;
                    double w = a * T;
                    r += w * s.color.x;
                    g += w * s.color.y;
                    b += w * s.color.z;
                    T *= 1.0 - a;
                }
                r += T * opt.background.x;
                g += T * opt.background.y;
                b += T * opt.background.z;
                out.rgb.at(0, y, x) = r;
                out.rgb.at(1, y, x) = g;
                out.rgb.at(2, y, x) = b;
                out.transmittance[size_t(y) * cam.width + x] = T;
            }
    }
    return out;
}

GimBuffer render_gim(const GaussianSet& set, const Camera& cam, int top_n) {
    if (top_n < 1 || top_n > 5) throw ContractViolation("render_gim top_n must be in [1,5]");
    Prepared p = prepare(set, cam);
    GimBuffer gim(cam.width, cam.height, top_n);

    const int ntiles = p.grid.tx * p.grid.ty;
#pragma omp parallel for schedule(dynamic, 1)
    for (int t = 0; t < ntiles; t++) {
        const auto& list = p.grid.lists[t];
        int tx = t % p.grid.tx, ty = t / p.grid.tx;
        int x0 = tx * kTileSize, y0 = ty * kTileSize;
        int x1 = std::min(x0 + kTileSize, cam.width), y1 = std::min(y0 + kTileSize, cam.height);
        struct Slot {
            double w, depth;
            int32_t id;
        };
        for (int y = y0; y < y1; y++)
            for (int x = x0; x < x1; x++) {
                Slot slots[5];
                int cnt = 0;
                double T = 1.0;
                for (int si : list) {
                    const Splat2D& s = p.splats[si];
                    double a = splat_alpha(s, x, y);
                    if (a == 0.0) continue;
                    Slot cand{a * T, s.depth, s.id};
                    T *= 1.0 - a;
                    // Insertion by weight desc, ties by depth asc then id asc.
                    int pos = cnt;
                    while (pos > 0) {
                        const Slot& q = slots[pos - 1];
                        bool cand_wins =
                            cand.w > q.w ||
                            (cand.w == q.w &&
                             (cand.depth < q.depth || (cand.depth == q.depth && cand.id < q.id)));
                        if (!cand_wins) break;
                        pos--;
                    }
                    if (pos >= top_n) continue;
                    for (int k = std::min(cnt, top_n - 1); k > pos; k--) slots[k] = slots[k - 1];
                    slots[pos] = cand;
                    if (cnt < top_n) cnt++;
                }
                size_t base = (size_t(y) * cam.width + x) * top_n;
                gim.counts[size_t(y) * cam.width + x] = uint8_t(cnt);
                for (int k = 0; k < cnt; k++) {
                    gim.ids[base + k] = slots[k].id;
                    gim.weights[base + k] = slots[k].w;
                }
            }
    }
    return gim;
}

namespace {

// Per-splat image-space gradients (phase A output).
struct SplatGrad {
    double dmx = 0, dmy = 0;           // d/dmean2d
    double dia = 0, dib = 0, dic = 0;  // d/dinv_cov (a, b, c)
    double dop = 0;                    // d/dopacity
    double dcr = 0, dcg = 0, dcb = 0;  // d/dcolor (after the [0,1] clamp)
};

} // namespace

GaussianGrads render_backward(const GaussianSet& set, const Camera& cam,
                              const Image& dL_dimage, const RenderOptions& opt) {
    if (dL_dimage.w != cam.width || dL_dimage.h != cam.height || dL_dimage.c != 3)
        throw ContractViolation("render_backward: gradient image shape mismatch");
    Prepared p = prepare(set, cam);

    // Phase A: per-tile accumulation of image-space gradients. Each tile is
    // serial inside, so per-tile sums are deterministic.
    const int ntiles = p.grid.tx * p.grid.ty;
    std::vector<std::vector<SplatGrad>> tile_grads(ntiles);

#pragma omp parallel for schedule(dynamic, 1)
    for (int t = 0; t < ntiles; t++) {
        const auto& list = p.grid.lists[t];
        if (list.empty()) continue;
        auto& grads = tile_grads[t];
        grads.assign(list.size(), SplatGrad{});
        int tx = t % p.grid.tx, ty = t / p.grid.tx;
        int x0 = tx * kTileSize, y0 = ty * kTileSize;
        int x1 = std::min(x0 + kTileSize, cam.width), y1 = std::min(y0 + kTileSize, cam.height);

        struct Contrib {
            int li;
            double alpha, T;  // transmittance in front of this splat
        };
        std::vector<Contrib> stack;
        stack.reserve(list.size());

        for (int y = y0; y < y1; y++)
            for (int x = x0; x < x1; x++) {
                double gr = dL_dimage.at(0, y, x);
                double gg = dL_dimage.at(1, y, x);
                double gb = dL_dimage.at(2, y, x);
                if (gr == 0 && gg == 0 && gb == 0) continue;

                stack.clear();
                double T = 1.0;
                for (int li = 0; li < int(list.size()); li++) {
                    const Splat2D& s = p.splats[list[li]];
                    double a = splat_alpha(s, x, y);
                    if (a == 0.0) continue;
                    stack.push_back({li, a, T});
                    T *= 1.0 - a;
                }
                // Suffix sum of what lies behind each splat, incl. background.
                double sufr = T * opt.background.x;
                double sufg = T * opt.background.y;
                double sufb = T * opt.background.z;
                for (int k = int(stack.size()) - 1; k >= 0; k--) {
                    const Contrib& c = stack[k];
                    const Splat2D& s = p.splats[list[c.li]];
                    SplatGrad& sg = grads[c.li];
                    double w = c.alpha * c.T;

                    sg.dcr += w * gr;
                    sg.dcg += w * gg;
                    sg.dcb += w * gb;

                    double inv1ma = 1.0 / (1.0 - c.alpha);
                    double dLda = gr * (s.color.x * c.T - sufr * inv1ma) +
                                  gg * (s.color.y * c.T - sufg * inv1ma) +
                                  gb * (s.color.z * c.T - sufb * inv1ma);

                    // The alpha clamp gates all upstream gradients.
                    if (c.alpha < kAlphaClamp) {
                        double gexp = c.alpha / s.opacity;  // exp(power)
                        sg.dop += dLda * gexp;
                        double dLdpow = dLda * c.alpha;  // d/dpower via o*exp(power)
                        double dx = x - s.mean.x, dy = y - s.mean.y;
                        sg.dmx += dLdpow * (s.inv_cov.a * dx + s.inv_cov.b * dy);
                        sg.dmy += dLdpow * (s.inv_cov.b * dx + s.inv_cov.c * dy);
                        sg.dia += dLdpow * (-0.5 * dx * dx);
                        sg.dib += dLdpow * (-dx * dy);
                        sg.dic += dLdpow * (-0.5 * dy * dy);
                    }

                    sufr += w * s.color.x;
                    sufg += w * s.color.y;
                    sufb += w * s.color.z;
                }
            }
    }

    // Fixed-order reduction over tiles into per-splat totals: bit-identical
    // for any thread count.
    std::vector<SplatGrad> total(p.splats.size());
    for (int t = 0; t < ntiles; t++) {
        const auto& list = p.grid.lists[t];
        const auto& grads = tile_grads[t];
        for (size_t k = 0; k < grads.size(); k++) {
            SplatGrad& d = total[list[k]];
            const SplatGrad& s = grads[k];
            d.dmx += s.dmx;
            d.dmy += s.dmy;
            d.dia += s.dia;
            d.dib += s.dib;
            d.dic += s.dic;
            d.dop += s.dop;
            d.dcr += s.dcr;
            d.dcg += s.dcg;
            d.dcb += s.dcb;
        }
    }

    // Phase B: chain image-space gradients through the projection, per splat.
    GaussianGrads out(set.g.size());
    const int nvis = int(p.splats.size());
#pragma omp parallel for schedule(static)
    for (int vi = 0; vi < nvis; vi++) {
        const SplatGrad& acc = total[vi];
        const Splat2D& s = p.splats[vi];
        const Gaussian3D& g = set.g[s.id];

        out.dopacity[s.id] = acc.dop;

        // ---- color -> sh and view direction -> position
        Vec3 cc = cam.center();
        Vec3 v = g.pos() - cc;
        double vlen = v.norm();
        Vec3 dir = {v.x / vlen, v.y / vlen, v.z / vlen};
        Vec3 craw = eval_sh(g.sh, dir);
        double dc[3] = {acc.dcr, acc.dcg, acc.dcb};
        double craw_a[3] = {craw.x, craw.y, craw.z};
        Vec3 ddir{0, 0, 0};
        auto& dsh = out.dsh[s.id];
        for (int ch = 0; ch < 3; ch++) {
            if (!(craw_a[ch] > 0.0 && craw_a[ch] < 1.0)) continue;  // clamp gate
            const float* shc = g.sh.data() + ch * 4;
            dsh[ch * 4 + 0] = kShC0 * dc[ch];
            dsh[ch * 4 + 1] = -kShC1 * dir.y * dc[ch];
            dsh[ch * 4 + 2] = kShC1 * dir.z * dc[ch];
            dsh[ch * 4 + 3] = -kShC1 * dir.x * dc[ch];
            ddir.x += dc[ch] * (-kShC1 * shc[3]);
            ddir.y += dc[ch] * (-kShC1 * shc[1]);
            ddir.z += dc[ch] * (kShC1 * shc[2]);
        }
        Vec3 du = (ddir - dir * dir.dot(ddir)) * (1.0 / vlen);

        // ---- inv_cov -> cov2d
        // M_A carries d/dinv_cov with the off-diagonal split across both slots.
        double Aa = s.inv_cov.a, Ab = s.inv_cov.b, Ac = s.inv_cov.c;
        double Ma = acc.dia, Mb = 0.5 * acc.dib, Mc = acc.dic;
        // N = -A * M_A * A (2x2 symmetric).
        double AM00 = Aa * Ma + Ab * Mb, AM01 = Aa * Mb + Ab * Mc;
        double AM10 = Ab * Ma + Ac * Mb, AM11 = Ab * Mb + Ac * Mc;
        double N00 = -(AM00 * Aa + AM01 * Ab);
        double N01 = -(AM00 * Ab + AM01 * Ac);
        double N11 = -(AM10 * Ab + AM11 * Ac);

        // ---- cov2d -> (M rows, Sigma3) with cov2d = M Sigma3 M^T + 0.3 I
        Vec3 tc = cam.to_camera(g.pos());
        double iz = 1.0 / tc.z, iz2 = iz * iz;
        double j00 = cam.fx * iz, j02 = -cam.fx * tc.x * iz2;
        double j11 = cam.fy * iz, j12 = -cam.fy * tc.y * iz2;
        Vec3 m0 = {j00 * cam.R(0, 0) + j02 * cam.R(2, 0),
                   j00 * cam.R(0, 1) + j02 * cam.R(2, 1),
                   j00 * cam.R(0, 2) + j02 * cam.R(2, 2)};
        Vec3 m1 = {j11 * cam.R(1, 0) + j12 * cam.R(2, 0),
                   j11 * cam.R(1, 1) + j12 * cam.R(2, 1),
                   j11 * cam.R(1, 2) + j12 * cam.R(2, 2)};
        Mat3 sigma = build_covariance(g.rot(), g.scale());
        Vec3 sm0 = sigma * m0, sm1 = sigma * m1;  // Sigma3 m_r (Sigma3 symmetric)

        // dL/dM rows: 2 * (N row) dot (M Sigma3): row0 = 2(N00*sm0 + N01*sm1), etc.
        Vec3 dM0 = (sm0 * N00 + sm1 * N01) * 2.0;
        Vec3 dM1 = (sm0 * N01 + sm1 * N11) * 2.0;
        // dL/dSigma3 = M^T N M = N00 m0 m0^T + N01 (m0 m1^T + m1 m0^T) + N11 m1 m1^T.
        Mat3 G3;
        double m0a[3] = {m0.x, m0.y, m0.z};
        double m1a[3] = {m1.x, m1.y, m1.z};
        for (int r = 0; r < 3; r++)
            for (int c = 0; c < 3; c++)
                G3(r, c) = N00 * m0a[r] * m0a[c] + N01 * (m0a[r] * m1a[c] + m1a[r] * m0a[c]) +
                           N11 * m1a[r] * m1a[c];

        // ---- M = J R_cam: dL/dJ = dL/dM * R^T; J entries depend on tc.
        double dj00 = dM0.x * cam.R(0, 0) + dM0.y * cam.R(0, 1) + dM0.z * cam.R(0, 2);
        double dj02 = dM0.x * cam.R(2, 0) + dM0.y * cam.R(2, 1) + dM0.z * cam.R(2, 2);
        double dj11 = dM1.x * cam.R(1, 0) + dM1.y * cam.R(1, 1) + dM1.z * cam.R(1, 2);
        double dj12 = dM1.x * cam.R(2, 0) + dM1.y * cam.R(2, 1) + dM1.z * cam.R(2, 2);
        Vec3 dt{0, 0, 0};
        dt.x += dj02 * (-cam.fx * iz2);
        dt.y += dj12 * (-cam.fy * iz2);
        dt.z += dj00 * (-cam.fx * iz2) + dj11 * (-cam.fy * iz2) +
                dj02 * (2.0 * cam.fx * tc.x * iz2 * iz) + dj12 * (2.0 * cam.fy * tc.y * iz2 * iz);

        // ---- mean2d -> tc
        dt.x += acc.dmx * cam.fx * iz;
        dt.y += acc.dmy * cam.fy * iz;
        dt.z += -acc.dmx * cam.fx * tc.x * iz2 - acc.dmy * cam.fy * tc.y * iz2;

        du += cam.R.transposed() * dt;
        out.du[s.id] = du;

        // ---- Sigma3 = R D R^T -> quaternion
        Quat qn = quat_normalize(g.rot());
        Mat3 R = quat_to_rotmat(g.rot());
        Mat3 D = Mat3::diag(double(g.s[0]) * g.s[0], double(g.s[1]) * g.s[1],
                            double(g.s[2]) * g.s[2]);
        // dL/dR = (G3 + G3^T) R D
        Mat3 Gs = G3 + G3.transposed();
        Mat3 dR = Gs * R * D;

        double w = qn.w, xq = qn.x, yq = qn.y, zq = qn.z;
        auto dot9 = [&dR](const Mat3& A) {
            double sum = 0;
            for (int i = 0; i < 9; i++) sum += dR.m[i] * A.m[i];
            return sum;
        };
        Mat3 dRw, dRx, dRy, dRz;
        dRw.m = {0, -2 * zq, 2 * yq, 2 * zq, 0, -2 * xq, -2 * yq, 2 * xq, 0};
        dRx.m = {0, 2 * yq, 2 * zq, 2 * yq, -4 * xq, -2 * w, 2 * zq, 2 * w, -4 * xq};
        dRy.m = {-4 * yq, 2 * xq, 2 * w, 2 * xq, 0, 2 * zq, -2 * w, 2 * zq, -4 * yq};
        dRz.m = {-4 * zq, -2 * w, 2 * xq, 2 * w, -4 * zq, 2 * yq, 2 * xq, 2 * yq, 0};
        double dqh[4] = {dot9(dRw), dot9(dRx), dot9(dRy), dot9(dRz)};

        // Through the normalization q_hat = q / |q|.
        double qrawn = g.rot().norm();
        double qh[4] = {w, xq, yq, zq};
        double dotqh = dqh[0] * qh[0] + dqh[1] * qh[1] + dqh[2] * qh[2] + dqh[3] * qh[3];
        for (int k = 0; k < 4; k++) out.dq[s.id][k] = (dqh[k] - qh[k] * dotqh) / qrawn;
    }
    return out;
}

} // namespace mgs
