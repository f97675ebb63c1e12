#pragma once

// Differentiable CPU rasterizer. Forward compositing follows front-to-back
// alpha blending over depth-sorted splats (ties broken by index) on 16x16
// tiles; the Gaussian-index-map pass records the top-N contributors per pixel
// by blending weight. The backward pass accumulates per-tile gradients and
// reduces them in fixed tile order, so results are bit-identical across
// runs and thread counts.

#include <array>
#include <vector>

#include "mgs/gaussian.hpp"
#include "mgs/image.hpp"

namespace mgs {

inline constexpr int kTileSize = 16;

struct RenderOptions {
    Vec3 background{0, 0, 0};  // pinned default: black
};

struct RenderedImage {
    Image rgb;                          // 3 channels
    std::vector<double> transmittance;  // per pixel, after the last splat

    double T(int y, int x) const { return transmittance[size_t(y) * rgb.w + x]; }
};

// Top-N contributor map. Entries per pixel are sorted by weight descending,
// ties by smaller depth then smaller index. Unused slots hold id -1.
struct GimBuffer {
    int w = 0, h = 0, top_n = 0;
    std::vector<int32_t> ids;
    std::vector<double> weights;
    std::vector<uint8_t> counts;

    GimBuffer() = default;
    GimBuffer(int w_, int h_, int n)
        : w(w_), h(h_), top_n(n),
          ids(size_t(w_) * h_ * n, -1),
          weights(size_t(w_) * h_ * n, 0.0),
          counts(size_t(w_) * h_, 0) {}

    int count(int y, int x) const { return counts[size_t(y) * w + x]; }
    int32_t id(int y, int x, int k) const { return ids[(size_t(y) * w + x) * top_n + k]; }
    double weight(int y, int x, int k) const { return weights[(size_t(y) * w + x) * top_n + k]; }
};

struct GaussianGrads {
    std::vector<Vec3> du;
    std::vector<std::array<double, 4>> dq;
    std::vector<double> dopacity;
    std::vector<std::array<double, 12>> dsh;

    explicit GaussianGrads(size_t n = 0)
        : du(n), dq(n, {0, 0, 0, 0}), dopacity(n, 0.0), dsh(n, std::array<double, 12>{}) {}
};

// Compositing alpha of one projected splat at a pixel center: opacity times
// the 2D Gaussian falloff, clamped to 0.99, zeroed below the 1/255 skip
// threshold. Exposed so coverage analyses share the renderer's arithmetic.
double splat_alpha(const Splat2D& s, double px, double py);

RenderedImage render(const GaussianSet& set, const Camera& cam, const RenderOptions& opt = {});

// top_n must be in [1, 5].
GimBuffer render_gim(const GaussianSet& set, const Camera& cam, int top_n);

// Gradient of sum(dL_dimage * image) w.r.t. position, rotation, opacity and SH
// of every Gaussian. dL_dimage must be a 3-channel image matching the camera.
GaussianGrads render_backward(const GaussianSet& set, const Camera& cam,
                              const Image& dL_dimage, const RenderOptions& opt = {});

} // namespace mgs
