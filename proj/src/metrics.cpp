#include "mgs/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mgs {

double psnr(const Image& a, const Image& b, const BoolMask* region) {
    if (!a.same_shape(b)) throw ContractViolation("psnr: image shapes differ");
    if (region && (region->w != a.w || region->h != a.h))
        throw ContractViolation("psnr: region shape differs");
    double se = 0;
    size_t count = 0;
    for (int y = 0; y < a.h; y++)
        for (int x = 0; x < a.w; x++) {
            if (region && !region->at(y, x)) continue;
            for (int c = 0; c < a.c; c++) {
                double d = a.at(c, y, x) - b.at(c, y, x);
                se += d * d;
            }
            count += a.c;
        }
    if (region && count == 0) throw ContractViolation("psnr: empty region");
    double mse = count ? se / double(count) : 0.0;
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

// ---------------------------------------------------------------------- ssim

namespace {

constexpr int kWin = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::array<double, kWin> gaussian_taps() {
    std::array<double, kWin> t;
    double sum = 0;
    for (int i = 0; i < kWin; i++) {
        double d = i - (kWin - 1) / 2.0;
        t[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
        sum += t[i];
    }
    for (double& v : t) v /= sum;
    return t;
}

// Separable Gaussian correlation with zero padding, one channel plane.
struct Plane {
    int w, h;
    std::vector<double> v;
    Plane(int w_, int h_) : w(w_), h(h_), v(size_t(w_) * h_, 0.0) {}
    double& at(int y, int x) { return v[size_t(y) * w + x]; }
    double at(int y, int x) const { return v[size_t(y) * w + x]; }
};

Plane filter(const Plane& p) {
    static const std::array<double, kWin> taps = gaussian_taps();
    const int r = kWin / 2;
    Plane mid(p.w, p.h), out(p.w, p.h);
    for (int y = 0; y < p.h; y++)
        for (int x = 0; x < p.w; x++) {
            double s = 0;
            for (int k = -r; k <= r; k++) {
                int xi = x + k;
                if (xi < 0 || xi >= p.w) continue;
                s += taps[k + r] * p.at(y, xi);
            }
            mid.at(y, x) = s;
        }
    for (int y = 0; y < p.h; y++)
        for (int x = 0; x < p.w; x++) {
            double s = 0;
            for (int k = -r; k <= r; k++) {
                int yi = y + k;
                if (yi < 0 || yi >= p.h) continue;
                s += taps[k + r] * mid.at(yi, x);
            }
            out.at(y, x) = s;
        }
    return out;
}

Plane channel_of(const Image& img, int c) {
    Plane p(img.w, img.h);
    for (int y = 0; y < img.h; y++)
        for (int x = 0; x < img.w; x++) p.at(y, x) = img.at(c, y, x);
    return p;
}

Plane hadamard(const Plane& a, const Plane& b) {
    Plane r(a.w, a.h);
    for (size_t i = 0; i < r.v.size(); i++) r.v[i] = a.v[i] * b.v[i];
    return r;
}

double ssim_channel(const Plane& x, const Plane& y, Plane* dmean_dx) {
    Plane mx = filter(x), my = filter(y);
    Plane x2 = filter(hadamard(x, x)), y2 = filter(hadamard(y, y));
    Plane xy = filter(hadamard(x, y));
    size_t npx = x.v.size();

    double sum = 0;
    Plane g1(x.w, x.h), g2(x.w, x.h), g3(x.w, x.h);
    for (size_t i = 0; i < npx; i++) {
        double ux = mx.v[i], uy = my.v[i];
        double sx = x2.v[i] - ux * ux;
        double sy = y2.v[i] - uy * uy;
        double sxy = xy.v[i] - ux * uy;
        double a1 = 2 * ux * uy + kC1, a2 = 2 * sxy + kC2;
        double b1 = ux * ux + uy * uy + kC1, b2 = sx + sy + kC2;
        sum += (a1 * a2) / (b1 * b2);
        if (dmean_dx) {
            g1.v[i] = 2 * uy * a2 / (b1 * b2) - 2 * ux * a1 * a2 / (b1 * b1 * b2);
            g2.v[i] = -a1 * a2 / (b1 * b2 * b2);
            g3.v[i] = 2 * a1 / (b1 * b2);
        }
    }
    if (dmean_dx) {
        // d(sum S)/dx via the adjoint of each filtering (the window is
        // symmetric, so the adjoint of correlate-with-zero-pad is itself):
        //   mu_x path: W g1
        //   sigma_x^2 path: 2x (W g2) - 2 W(g2 mu_x)
        //   sigma_xy path: y (W g3) - W(g3 mu_y)
        Plane wg1 = filter(g1), wg2 = filter(g2), wg3 = filter(g3);
        Plane wg2mx = filter(hadamard(g2, mx)), wg3my = filter(hadamard(g3, my));
        for (size_t i = 0; i < npx; i++)
            dmean_dx->v[i] = (wg1.v[i] + 2 * x.v[i] * wg2.v[i] - 2 * wg2mx.v[i] +
                              y.v[i] * wg3.v[i] - wg3my.v[i]) /
                             double(npx);
    }
    return sum / double(npx);
}

void check_ssim_inputs(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw ContractViolation("ssim: image shapes differ");
    if (a.w < kWin || a.h < kWin) throw ContractViolation("ssim: image smaller than the window");
}

} // namespace

double ssim(const Image& a, const Image& b) {
    check_ssim_inputs(a, b);
    double s = 0;
    for (int c = 0; c < a.c; c++) s += ssim_channel(channel_of(a, c), channel_of(b, c), nullptr);
    return s / a.c;
}

double dssim(const Image& a, const Image& b) { return (1.0 - ssim(a, b)) / 2.0; }

double dssim_with_grad(const Image& a, const Image& b, Image* grad_a) {
    check_ssim_inputs(a, b);
    if (grad_a) *grad_a = Image(a.w, a.h, a.c);
    double s = 0;
    for (int c = 0; c < a.c; c++) {
        Plane g(a.w, a.h);
        s += ssim_channel(channel_of(a, c), channel_of(b, c), grad_a ? &g : nullptr);
        if (grad_a) {
            // ssim = mean over channels; d(dssim)/da = -dssim_grad/(2*channels)
            for (int y = 0; y < a.h; y++)
                for (int x = 0; x < a.w; x++)
                    grad_a->at(c, y, x) = -0.5 * g.at(y, x) / a.c;
        }
    }
    return (1.0 - s / a.c) / 2.0;
}

// ---------------------------------------------------------------- warp error

namespace {

bool sample_bilinear(const Image& img, double x, double y, double* rgb) {
    if (x < 0 || y < 0 || x > img.w - 1 || y > img.h - 1) return false;
    int x0 = int(x), y0 = int(y);
    int x1 = std::min(x0 + 1, img.w - 1), y1 = std::min(y0 + 1, img.h - 1);
    double fx = x - x0, fy = y - y0;
    for (int c = 0; c < img.c; c++)
        rgb[c] = img.at(c, y0, x0) * (1 - fx) * (1 - fy) + img.at(c, y0, x1) * fx * (1 - fy) +
                 img.at(c, y1, x0) * (1 - fx) * fy + img.at(c, y1, x1) * fx * fy;
    return true;
}

bool sample_flow(const FlowField& f, double x, double y, Vec2* out) {
    if (x < 0 || y < 0 || x > f.w - 1 || y > f.h - 1) return false;
    int x0 = int(x), y0 = int(y);
    int x1 = std::min(x0 + 1, f.w - 1), y1 = std::min(y0 + 1, f.h - 1);
    double fx = x - x0, fy = y - y0;
    *out = f.at(y0, x0) * ((1 - fx) * (1 - fy)) + f.at(y0, x1) * (fx * (1 - fy)) +
           f.at(y1, x0) * ((1 - fx) * fy) + f.at(y1, x1) * (fx * fy);
    return true;
}

} // namespace

BoolMask occlusion_mask(const FlowField& fwd, const FlowField& bwd, double tol) {
    if (fwd.w != bwd.w || fwd.h != bwd.h)
        throw ContractViolation("occlusion_mask: field shapes differ");
    BoolMask valid(fwd.w, fwd.h);
    for (int y = 0; y < fwd.h; y++)
        for (int x = 0; x < fwd.w; x++) {
            Vec2 f = fwd.at(y, x);
            Vec2 back;
            if (!sample_flow(bwd, x + f.x, y + f.y, &back)) continue;  // occluded
            valid.at(y, x) = (f + back).norm() < tol ? 1 : 0;
        }
    return valid;
}

double e_pair(const Image& i_i, const Image& i_j, const FlowField& flow, const BoolMask& mask) {
    if (!i_i.same_shape(i_j)) throw ContractViolation("e_pair: image shapes differ");
    if (flow.w != i_i.w || flow.h != i_i.h || mask.w != i_i.w || mask.h != i_i.h)
        throw ContractViolation("e_pair: flow/mask shape differs");
    double sum = 0;
    size_t count = 0;
    std::vector<double> rgb(i_i.c);
    for (int y = 0; y < i_i.h; y++)
        for (int x = 0; x < i_i.w; x++) {
            if (!mask.at(y, x)) continue;
            Vec2 f = flow.at(y, x);
            if (!sample_bilinear(i_j, x + f.x, y + f.y, rgb.data())) continue;
            for (int c = 0; c < i_i.c; c++) sum += std::abs(i_i.at(c, y, x) - rgb[c]);
            count += i_i.c;
        }
    return count ? sum / double(count) : 0.0;
}

WarpReport e_warp(const std::vector<Image>& frames, const std::vector<FlowField>& flows_prev,
                  const std::vector<FlowField>& flows_zero,
                  const std::vector<BoolMask>& masks_prev,
                  const std::vector<BoolMask>& masks_zero) {
    size_t T = frames.size();
    if (T < 2) throw ContractViolation("e_warp: need at least two frames");
    if (flows_prev.size() != T - 1 || flows_zero.size() != T - 1 ||
        masks_prev.size() != T - 1 || masks_zero.size() != T - 1)
        throw ContractViolation("e_warp: flow/mask lists must have length T-1");
    WarpReport r;
    double sum = 0;
    for (size_t t = 1; t < T; t++) {
        double ep = e_pair(frames[t], frames[t - 1], flows_prev[t - 1], masks_prev[t - 1]);
        double ez = e_pair(frames[t], frames[0], flows_zero[t - 1], masks_zero[t - 1]);
        r.epair_prev.push_back(ep);
        r.epair_zero.push_back(ez);
        sum += ep + ez;
    }
    r.total = sum / double(T - 1);
    return r;
}

} // namespace mgs
