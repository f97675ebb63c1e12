#pragma once

// Serial reference rasterizer. Single-threaded, no tiling, no support-radius
// culling: every splat is evaluated at every pixel from a full per-image depth
// sort. The projection math is written out long-hand, independent of the fast
// path, so the two implementations can check each other.

#include "mgs/rasterizer.hpp"

namespace mgs {

RenderedImage ref_render(const GaussianSet& set, const Camera& cam,
                         const RenderOptions& opt = {});

GimBuffer ref_render_gim(const GaussianSet& set, const Camera& cam, int top_n);

} // namespace mgs
