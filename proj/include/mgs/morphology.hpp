#pragma once

// Binary morphology on masks with square windows and replicate-edge borders.
// Dilation reads offsets [-k/2, k-1-k/2] and erosion the mirrored range, so
// closing = erode(dilate(x)) is exactly idempotent (the windows are adjoint;
// the usual delta-eps-delta = delta identity survives edge clamping).

#include "mgs/image.hpp"

namespace mgs {

BoolMask dilate(const BoolMask& m, int kernel);
BoolMask erode(const BoolMask& m, int kernel);
BoolMask closing(const BoolMask& m, int kernel);

} // namespace mgs
