#pragma once

// Neural offset maps: a multiresolution hash-grid encoder feeding a small MLP.
// Two instances are trained per frame: one producing 7-dim rigid offsets
// (du, dq), one producing 12-dim SH offsets. The MLP output layer is
// zero-initialized so a fresh map is the identity update.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mgs/gaussian.hpp"
#include "mgs/indexset.hpp"
#include "mgs/io.hpp"

namespace mgs {

struct HashGridConfig {
    int levels = 16;
    int base_resolution = 16;
    int finest_resolution = 512;
    int table_size = 1 << 15;
    int features_per_level = 4;

    int feature_dim() const { return levels * features_per_level; }
    // Per-level vertex count along each axis: floor(base * growth^level) with
    // growth chosen so level (levels-1) lands on finest_resolution.
    int level_resolution(int level) const;
};

class NeuralMap {
public:
    static constexpr int kHidden = 64;

    NeuralMap(const HashGridConfig& grid_cfg, int output_dim, uint64_t seed, const Aabb& scene_box);

    int output_dim() const { return out_dim_; }
    const HashGridConfig& grid_config() const { return gcfg_; }
    int64_t step_count() const { return step_; }

    // All parameters, grid first then MLP (w1, b1, w2, b2, w3, b3). Mutable
    // access exists for probing in tests.
    const std::vector<double>& params() const { return p_; }
    std::vector<double>& params() { return p_; }
    size_t grid_param_count() const { return grid_count_; }

    // outputs: row-major [positions.size() x output_dim].
    void forward(const std::vector<Vec3>& positions, std::vector<double>* outputs) const;

    // Gradient of sum(dL_doutputs * outputs) over every parameter, laid out
    // like params().
    void backward(const std::vector<Vec3>& positions, const std::vector<double>& dL_doutputs,
                  std::vector<double>* dparams) const;

    // backward + one adaptive-moment update (beta1 0.9, beta2 0.999,
    // eps 1e-15, bias-corrected, dense over all parameters). Throws
    // TrainingDivergence on non-finite gradients.
    void backward_and_step(const std::vector<Vec3>& positions,
                           const std::vector<double>& dL_doutputs, double lr_grid, double lr_mlp);

    // Container "MGSNTC1": config block + float32 parameters. Optimizer
    // moments are not persisted; loading resets them.
    void save(const std::string& path) const;
    static NeuralMap load(const std::string& path);

private:
    NeuralMap() = default;
    void init_offsets();

    HashGridConfig gcfg_;
    int out_dim_ = 0;
    Aabb box_;  // padded scene box used for input normalization
    size_t grid_count_ = 0;
    // Offsets of the MLP segments inside p_.
    size_t w1_ = 0, b1_ = 0, w2_ = 0, b2_ = 0, w3_ = 0, b3_ = 0;
    std::vector<double> p_, m_, v_;
    int64_t step_ = 0;
};

// Rigid update on the g_m members only: u += du and q <- q * dq (dq shifted
// from identity and normalized). Routed through the delta container's apply
// path so live training and replay share one arithmetic.
GaussianSet apply_deformation(const GaussianSet& set, const IndexSet& g_m,
                              const std::vector<std::array<float, 3>>& du,
                              const std::vector<std::array<float, 4>>& dq);

// Additive SH update on the g_new members only; everything else untouched.
GaussianSet apply_sh_offsets(const GaussianSet& set, const IndexSet& g_new,
                             const std::vector<std::array<float, 12>>& dsh);

} // namespace mgs
