#pragma once

#include "lptm/llf.hpp"
#include "lptm/model.hpp"
#include "lptm/pyramid.hpp"

#include <vector>

namespace lptm {

struct PipelineConfig {
    int target_low = 64;
    RemapConfig remap;
    double canny_low = 0.1;
    double canny_high = 0.2;
    bool refine_enabled = true; // false: bands pass through untouched (LUT-only)
};

struct StageTimes {
    double decompose = 0, weights = 0, fuse = 0, edges = 0, refine = 0, reconstruct = 0;
};

// Intermediates of one forward pass, enough to run the exact backward.
struct PipelineTrace {
    LaplacianPyramid lap;
    GaussianPyramid gauss;
    ConvTrace wnet;
    Image weights;
    std::vector<Image> lut_applied;
    Image i_low_hat;
    EdgeMap edge;
    RefineTrace refine;
    std::vector<Image> refined;
    Image output;
    StageTimes times;
};

// decompose -> predict_weights -> fuse_apply -> canny(i_low_hat) ->
// refine_pyramid -> reconstruct. Output is unclamped; callers clamp for
// display or metrics. edge_override, when given, replaces the Canny stage
// (used by the gradient checks, which hold the edge map fixed).
Image run_pipeline(const ModelState& s, const Image& input, const PipelineConfig& cfg,
                   PipelineTrace* trace = nullptr, const EdgeMap* edge_override = nullptr);

// grad_output is dL/d(output); grad_i_low_hat_extra is the direct loss term on
// the tone-mapped low image (empty image if none). Accumulates into grads.
void pipeline_backward(const ModelState& s, const PipelineTrace& trace,
                       const PipelineConfig& cfg, const Image& grad_output,
                       const Image& grad_i_low_hat_extra, ModelGrads& grads);

} // namespace lptm
