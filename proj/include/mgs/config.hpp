#pragma once

// Flat key=value pipeline configuration. '#' starts a comment, blank lines are
// skipped, unknown or duplicate keys are errors so drifted configs fail loudly
// instead of silently running with defaults.

#include <cstdint>
#include <string>

#include "mgs/trainer.hpp"

namespace mgs {

struct PipelineConfig {
    double flow_tau = 1.0;
    double diff_thresh = 10.0;
    int morph_kernel = 20;
    double eps = 2.0;
    int min_samples = 10;
    bool use_clustering = true;
    int top_n = 1;
    int deform_iters = 100;
    int optim_iters = 100;
    double lambda = 0.2;
    double percentile = 99.0;
    double lr_grid = 2e-2;
    double lr_mlp = 2e-3;
    uint64_t seed = 1;
    std::string flow_source = "gt"; // "gt" (simulator flows) or "lk" (estimated)
    int lk_levels = 3;
    std::string out_dir;            // stream output directory; empty = <scene>/stream
    std::string model_init;         // frame-0 model path; empty = simulator frame-0 set

    TrainConfig train_config() const;
};

PipelineConfig parse_config_text(const std::string& text);
PipelineConfig load_config(const std::string& path);

} // namespace mgs
