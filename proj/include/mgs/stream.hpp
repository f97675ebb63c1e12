#pragma once

// Stream orchestration: per-frame training over a scene, delta persistence,
// deterministic report emission, replay, and the frame-0 fit. Wall-clock
// timings go to a separate timings.json so reports and logs are byte-stable
// across reruns.

#include <cstdint>
#include <string>
#include <vector>

#include "mgs/config.hpp"
#include "mgs/scenesim.hpp"

namespace mgs {

struct FrameRecord {
    int frame = 0;
    double psnr_full = 0;   // held-out view, full image
    double psnr_dyn = 0;    // held-out view, GT dynamic region (+inf when empty)
    int64_t gm = 0;
    int64_t gnew = 0;
    uint64_t bytes = 0;     // delta file size
    double epair_prev = 0;  // E_pair(t, t-1) on the held-out renders
    double epair_zero = 0;  // E_pair(t, 0)
};

struct StreamReport {
    std::string out_dir;
    std::vector<FrameRecord> frames;  // t = 1..T-1
    double ewarp_total = 0;
    uint64_t bytes_deltas = 0;
    uint64_t bytes_with_frame0 = 0;   // deltas + frame-0 container
};

// Runs the per-frame pipeline over frames 1..T-1, training on every camera
// except the held-out view 0. Writes frame0.mgsply, delta_XXXX.mgsdlt,
// report.json, report.csv, logs/log_XXXX.json and timings.json into out_dir.
// All files are written atomically; an aborted run leaves no partial files.
StreamReport run_stream(const GroundTruth& gt, const PipelineConfig& cfg,
                        const std::string& out_dir);

// Reconstructs every frame's Gaussian set from frame0.mgsply plus the saved
// deltas. Bit-exact against the live stream's states by the delta contract.
std::vector<GaussianSet> replay_stream(const std::string& out_dir);

// Fixed-count frame-0 fit: Gaussians initialized at random positions inside
// the joint camera frustum, then position/rotation/opacity/SH optimized
// against the given views (scales stay at their init). iters = 0 returns the
// initialization.
GaussianSet fit_frame0(const std::vector<Image>& frames, const std::vector<Camera>& cams,
                       int iters, int count = 200, uint64_t seed = 7, double lambda = 0.2);

} // namespace mgs
