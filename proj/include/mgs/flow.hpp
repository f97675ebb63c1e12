#pragma once

// Optical flow and motion masks. Flow fields follow the forward convention:
// the vector at pixel x of frame t-1 points to the matching position in frame
// t. The built-in estimator is pyramidal Lucas-Kanade; high-fidelity flow can
// be supplied through the "MGSFLO1" container instead (the simulator writes
// exact flows in that format).

#include <string>

#include "mgs/image.hpp"
#include "mgs/math.hpp"

namespace mgs {

struct FlowField {
    int w = 0, h = 0;
    std::vector<Vec2> v;

    FlowField() = default;
    FlowField(int w_, int h_) : w(w_), h(h_), v(size_t(w_) * h_) {}

    Vec2& at(int y, int x) { return v[size_t(y) * w + x]; }
    const Vec2& at(int y, int x) const { return v[size_t(y) * w + x]; }
};

// Coarse-to-fine Lucas-Kanade: 9x9 window, 3 iterations per pyramid level,
// grayscale = mean RGB. levels >= 1 (clamped so the coarsest level stays
// usable). Accuracy is not contracted; downstream masks are.
FlowField estimate_flow(const Image& a, const Image& b, int levels);

// Raw container: magic "MGSFLO1", u32 width, u32 height, then row-major
// float32 (dx, dy) pairs.
void save_flow(const std::string& path, const FlowField& f);
FlowField load_flow(const std::string& path);

// Pixel true iff ||flow||_2 > tau (strict).
BoolMask flow_mask(const FlowField& f, double tau);

// Temporal difference: d = max over channels of |i_t - i_prev| on the 0-255
// scale, thresholded (strict >), then morphologically closed (dilate-erode,
// square kernel, replicate borders).
BoolMask temporal_diff_mask(const Image& i_t, const Image& i_prev, double thresh, int kernel);

// Pixelwise AND of the flow and temporal-difference masks.
BoolMask motion_mask(const BoolMask& flow_m, const BoolMask& diff_m);

} // namespace mgs
