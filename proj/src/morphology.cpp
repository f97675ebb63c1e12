#include "mgs/morphology.hpp"

#include <algorithm>

#include "mgs/errors.hpp"

namespace mgs {

namespace {

// Separable 1D sweep: horizontal then vertical, replicate borders via index
// clamping. pick_max=true gives dilation (OR), false erosion (AND).
BoolMask sweep(const BoolMask& m, int lo, int hi, bool pick_max) {
    BoolMask mid(m.w, m.h);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < m.h; y++)
        for (int x = 0; x < m.w; x++) {
            uint8_t v = pick_max ? 0 : 1;
            for (int o = lo; o <= hi; o++) {
                int xi = std::clamp(x + o, 0, m.w - 1);
                uint8_t s = m.at(y, xi);
                v = pick_max ? (v | s) : (v & s);
            }
            mid.at(y, x) = v;
        }
    BoolMask out(m.w, m.h);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < m.h; y++)
        for (int x = 0; x < m.w; x++) {
            uint8_t v = pick_max ? 0 : 1;
            for (int o = lo; o <= hi; o++) {
                int yi = std::clamp(y + o, 0, m.h - 1);
                uint8_t s = mid.at(yi, x);
                v = pick_max ? (v | s) : (v & s);
            }
            out.at(y, x) = v;
        }
    return out;
}

void check_kernel(const BoolMask& m, int kernel) {
    if (kernel < 1) throw ContractViolation("morphology kernel must be >= 1");
    if (m.w <= 0 || m.h <= 0) throw ContractViolation("morphology on empty mask");
}

} // namespace

BoolMask dilate(const BoolMask& m, int kernel) {
    check_kernel(m, kernel);
    int a = kernel / 2;
    return sweep(m, -a, kernel - 1 - a, true);
}

BoolMask erode(const BoolMask& m, int kernel) {
    check_kernel(m, kernel);
    int a = kernel / 2;
    return sweep(m, -(kernel - 1 - a), a, false);
}

BoolMask closing(const BoolMask& m, int kernel) { return erode(dilate(m, kernel), kernel); }

} // namespace mgs
