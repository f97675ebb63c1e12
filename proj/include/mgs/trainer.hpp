#pragma once

// Per-frame training: a deformation field drives position/rotation updates for
// the motion-related subset, then a color field refreshes SH coefficients for
// the gaussians flagged by the attention maps. Both stages optimize a neural
// map (hash grid + MLP) against the captured views; the gaussians themselves
// receive only the decoded offsets, so a frame is fully described by its
// FrameDelta and replays bit-exactly.

#include <cstdint>
#include <vector>

#include "mgs/flow.hpp"
#include "mgs/gaussian.hpp"
#include "mgs/image.hpp"
#include "mgs/indexset.hpp"
#include "mgs/io.hpp"
#include "mgs/motionselect.hpp"
#include "mgs/rasterizer.hpp"

namespace mgs {

struct TrainConfig {
    // Motion mask thresholds.
    double flow_tau = 1.0;    // pixels, ||flow|| > tau
    double diff_thresh = 10.0; // 8-bit units on the max-channel temporal diff
    int morph_kernel = 20;

    // Motion-related selection.
    double cluster_eps = 2.0;
    int cluster_min_samples = 10;
    bool use_clustering = true;
    int gim_top_n = 1;

    // Optimization.
    int deform_iters = 100;
    int optim_iters = 100;
    double loss_lambda = 0.2; // D-SSIM weight in the color loss
    double attention_percentile = 99.0;
    double lr_grid = 2e-2;
    double lr_mlp = 2e-3;
    uint64_t seed = 1;
};

// loss = (1 - lambda) * L1 + lambda * D-SSIM, with the gradient wrt the
// rendered image. L1 is the mean absolute error over all pixel-channels.
struct LossResult {
    double value = 0;
    Image grad;
};
LossResult loss_color(const Image& rendered, const Image& target, double lambda);

// Per-view binary attention masks: pixel error e = mean-channel |rendered -
// target|, thresholded at the given percentile of that view's error
// distribution (linear-interpolation percentile over all pixels, strict >).
std::vector<BoolMask> attention_maps(const std::vector<Image>& rendered,
                                     const std::vector<Image>& targets,
                                     double percentile);

// Gaussians that dominate at least one attention pixel in some view,
// restricted to the motion-related set.
IndexSet select_new_gaussians(const GaussianSet& deformed, const IndexSet& g_m,
                              const std::vector<Camera>& cams,
                              const std::vector<BoolMask>& attention, int top_n);

struct DeformResult {
    GaussianSet set; // prev with the decoded offsets applied to g_m
    std::vector<std::array<float, 3>> du; // per g_m entry
    std::vector<std::array<float, 4>> dq;
    std::vector<double> losses; // one entry per iteration
};

// Optimize a 7-output deformation map queried at the frozen previous-frame
// positions of g_m. With zero iterations or an empty g_m the returned set is
// bit-identical to prev.
DeformResult deform_stage(const GaussianSet& prev, const IndexSet& g_m,
                          const std::vector<Image>& targets,
                          const std::vector<Camera>& cams, const TrainConfig& cfg);

struct OptimizeResult {
    GaussianSet set;
    std::vector<std::array<float, 12>> dsh; // per g_new entry
    std::vector<double> losses;
};

// Optimize a 12-output SH-offset map queried at the deformed positions of
// g_new. Positions, rotations, scales and opacities stay untouched.
OptimizeResult optimize_stage(const GaussianSet& deformed, const IndexSet& g_new,
                              const std::vector<Image>& targets,
                              const std::vector<Camera>& cams, const TrainConfig& cfg);

struct FrameResult {
    GaussianSet set;  // == apply_delta(prev, delta)
    FrameDelta delta;
    IndexSet g_m;
    IndexSet g_new;
    std::vector<BoolMask> motion_masks; // per view, on the t-1 grid
    std::vector<double> deform_losses;
    std::vector<double> optim_losses;
    double seconds = 0; // wall clock, excluded from deterministic reports
};

// Full per-frame pipeline: motion masks from the provided forward flows
// (t-1 -> t, on the t-1 pixel grid), GIM backprojection and clustering on the
// previous frame's model, deformation, attention-gated SH refresh. frames_prev
// and flows must have one entry per camera.
FrameResult process_frame(const GaussianSet& prev, int frame_index,
                          const std::vector<Image>& frames_t,
                          const std::vector<Image>& frames_prev,
                          const std::vector<FlowField>& flows,
                          const std::vector<Camera>& cams, const TrainConfig& cfg);

} // namespace mgs
