#pragma once

// Evaluation metrics: PSNR (optionally region-restricted), SSIM / D-SSIM with
// an analytic image gradient (shared with the training loss), and the
// flow-warped temporal inconsistency score with occlusion masking.

#include <vector>

#include "mgs/flow.hpp"
#include "mgs/image.hpp"

namespace mgs {

// 10*log10(1/MSE), peak 1, MSE over all channels of the included pixels.
// Identical inputs return +infinity. Region, when given, must be non-empty.
double psnr(const Image& a, const Image& b, const BoolMask* region = nullptr);

// Mean SSIM: 11x11 Gaussian window (sigma 1.5), zero padding, C1 = 0.01^2,
// C2 = 0.03^2, averaged over pixels and channels. Images must be >= 11x11.
double ssim(const Image& a, const Image& b);

// (1 - ssim) / 2.
double dssim(const Image& a, const Image& b);

// D-SSIM and its analytic gradient with respect to `a`.
double dssim_with_grad(const Image& a, const Image& b, Image* grad_a);

// Pixel valid iff ||fwd(x) + bwd(x + fwd(x))||_2 < tol, bwd sampled
// bilinearly; lookups outside the image are occluded.
BoolMask occlusion_mask(const FlowField& fwd, const FlowField& bwd, double tol = 1.0);

// Warps i_j onto i_i's grid (bilinear sample at x + flow(x)) and returns the
// mean absolute difference over masked pixels and channels; 0 if the mask is
// empty. Sample points outside the image are dropped from the mean.
double e_pair(const Image& i_i, const Image& i_j, const FlowField& flow, const BoolMask& mask);

struct WarpReport {
    std::vector<double> epair_prev;  // E_pair(I_t, I_{t-1}) for t = 1..T-1
    std::vector<double> epair_zero;  // E_pair(I_t, I_0)     for t = 1..T-1
    double total = 0;                // mean over t of (prev + zero)
};

// Aggregate inconsistency over a sequence: for every t >= 1 the neighbor term
// warps frame t-1 onto t, the anchor term warps frame 0 onto t; both flows
// and masks live on frame t's grid.
WarpReport e_warp(const std::vector<Image>& frames, const std::vector<FlowField>& flows_prev,
                  const std::vector<FlowField>& flows_zero,
                  const std::vector<BoolMask>& masks_prev,
                  const std::vector<BoolMask>& masks_zero);

} // namespace mgs
