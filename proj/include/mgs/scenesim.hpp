#pragma once

// Deterministic synthetic dynamic scenes with exhaustive ground truth:
// per-frame Gaussian sets under scripted rigid motion, captured frames
// (renders of those sets), exact flow fields from projected top-1 Gaussian
// displacement, dynamic-region and influence masks, and per-Gaussian labels.
// Everything derives from a SceneSpec and its seed, so a scene can be rebuilt
// bit-identically from its JSON description.

#include <cstdint>
#include <string>
#include <vector>

#include "mgs/flow.hpp"
#include "mgs/gaussian.hpp"
#include "mgs/image.hpp"
#include "mgs/rng.hpp"

namespace mgs {

struct BlobSpec {
    int count = 0;
    Vec3 center{0, 0, 0};
    double radius = 1.0;          // sampling ball radius
    Vec3 base_color{0.5, 0.5, 0.5};
    double shade_jitter = 0.12;   // per-Gaussian color variation (texture)
    double gscale = 0.22;         // per-Gaussian scale magnitude
    double opacity = 0.9;
};

struct MoverSpec {
    BlobSpec blob;
    Vec3 velocity{0, 0, 0};       // units per frame
    Vec3 rot_axis{0, 1, 0};       // rotation about the blob center
    double rot_deg_per_frame = 0;
};

// Emerging objects exist from frame 0 with opacity 0 and switch to their
// target opacity at appear_frame; they ride the scripted transform of the
// mover they are attached to. Cardinality stays constant across frames.
struct EmergingSpec {
    BlobSpec blob;
    int appear_frame = 1;
    int attach_mover = 0;
};

struct RigSpec {
    int cameras = 8;              // camera 0 is held out for evaluation
    double radius = 12.0;
    double arc_deg = 48.0;        // full angular span of the frontal arc
    double y_low = -0.8;          // alternating camera heights
    double y_high = 1.2;
    Vec3 target{0, 0, 0};
    int width = 96;
    int height = 96;
    double focal = 103.0;
};

struct SceneSpec {
    std::string name;
    uint64_t seed = 1;
    int frames = 10;
    RigSpec rig;
    bool backdrop_wall = false;   // textured static plane at z = -4
    std::vector<BlobSpec> statics;
    std::vector<MoverSpec> movers;
    std::vector<EmergingSpec> emergers;
};

// Per-Gaussian labels: 0 static, k+1 mover-k, -(k+1) emerging-k.
inline bool label_is_static(int32_t l) { return l == 0; }
inline bool label_is_mover(int32_t l) { return l > 0; }
inline bool label_is_emerging(int32_t l) { return l < 0; }

struct GroundTruth {
    SceneSpec spec;
    std::vector<Camera> cams;
    std::vector<int32_t> labels;                   // aligned with every frame set
    std::vector<GaussianSet> sets;                 // [frame]
    std::vector<std::vector<Image>> renders;       // [frame][view], the "captured" frames
    // Flows for the pair (t-1, t) live at index t-1. fwd is on the t-1 grid
    // (t-1 -> t); bwd and bwd0 are on the t grid (t -> t-1, t -> 0).
    std::vector<std::vector<FlowField>> flow_fwd;  // [t-1][view]
    std::vector<std::vector<FlowField>> flow_bwd;  // [t-1][view]
    std::vector<std::vector<FlowField>> flow_bwd0; // [t-1][view]
    std::vector<std::vector<BoolMask>> vis_fwd;    // [t-1][view], fwd-warp validity
    std::vector<std::vector<BoolMask>> vis_bwd;    // [t-1][view], bwd-warp validity
    std::vector<std::vector<BoolMask>> vis_bwd0;   // [t-1][view], t -> 0 warp validity
    // Dynamic region of frame t: pixels whose top-1 Gaussian is non-static in
    // frame t or in its pair frame (t-1, or frame 1 for t = 0).
    std::vector<std::vector<BoolMask>> dyn_mask;   // [frame][view]
    // Pixels where any non-static Gaussian contributes alpha >= 1/255.
    std::vector<std::vector<BoolMask>> influence;  // [frame][view]
};

// The scripted rigid state of frame t applied to the frame-0 Gaussians.
// Emerging members get opacity 0 before their appearance frame. Shared by the
// builder and by ground-truth-transform oracles.
GaussianSet scene_frame_set(const SceneSpec& spec, const GaussianSet& frame0,
                            const std::vector<int32_t>& labels, int t);

GroundTruth build_scene(const SceneSpec& spec);

// The four pinned scenes: "static", "mover", "two-movers-static-between",
// "emerging".
std::vector<SceneSpec> standard_scenes();
SceneSpec standard_scene(const std::string& name);

// Pixels untouched by any dynamic Gaussian in frame_a and frame_b, shrunk by
// margin_px via dilation of the influence union. Renders restricted to this
// region are bit-identical across the two frames for any model whose dynamic
// content stays inside the dilated ground-truth influence.
BoolMask static_region_mask(const GroundTruth& gt, int view, int frame_a, int frame_b,
                            int margin_px);

// Directory export/rebuild. export_scene writes scene.json + cameras.json,
// per-frame Gaussian sets, captured frames (raw float + PNG), flow fields,
// and mask PNGs. load_scene_dir parses scene.json and rebuilds the ground
// truth deterministically.
void export_scene(const GroundTruth& gt, const std::string& dir);
GroundTruth load_scene_dir(const std::string& dir);

// Camera list round-trip used by the CLI render command.
void save_cameras_json(const std::string& path, const std::vector<Camera>& cams);
std::vector<Camera> load_cameras_json(const std::string& path);

} // namespace mgs
