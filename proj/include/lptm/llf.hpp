#pragma once

#include "lptm/conv.hpp"
#include "lptm/image.hpp"
#include "lptm/pyramid.hpp"

#include <vector>

namespace lptm {

// Per-level spatial maps driving the remapping function. alpha > 0 controls
// detail gain, beta >= 0 controls edge range; both single-channel at the size
// of the band they refine and shared across color channels.
struct ParamMaps {
    Image alpha;
    Image beta;
};

// Which quantity the detail/edge threshold tests. AbsDiff is the standard
// local-Laplacian reading |i-g| <= sigma_r; Value tests the raw coefficient
// i <= sigma_r instead and exists for comparison only.
enum class RemapBranch { AbsDiff, Value };

struct RemapConfig {
    double sigma_r = 0.1;
    int k_samples = 16;
    RemapBranch branch = RemapBranch::AbsDiff;
};

// Detail branch: g + sign(d) * sigma_r * (|d|/sigma_r)^alpha for |d| <= sigma_r,
// edge branch: g + sign(d) * (beta*(|d|-sigma_r) + sigma_r), with d = i - g and
// sign(0) = 0.
double remap(double i, double g, double alpha, double beta, double sigma_r,
             RemapBranch branch = RemapBranch::AbsDiff);

// Partial derivatives of remap w.r.t. alpha and beta; d_alpha is the limit 0
// at i == g.
void remap_grad(double i, double g, double alpha, double beta, double sigma_r,
                double& d_alpha, double& d_beta,
                RemapBranch branch = RemapBranch::AbsDiff);

// Fast per-level refinement: remaps the whole level image against k_samples
// reference values spanning [0,1], takes one blur-down/up-subtract Laplacian
// step per sample and interpolates per pixel between the two samples that
// bracket the Gaussian coefficient.
Image refine_level_fast(const Image& gauss_level, const Image& band,
                        const ParamMaps& params, const RemapConfig& cfg);

// Per-coefficient oracle: recomputes the Laplacian coefficient of every pixel
// with that pixel's own reference value and parameters. O(pixels^2); test use.
Image refine_level_direct(const Image& gauss_level, const Image& band,
                          const ParamMaps& params, const RemapConfig& cfg);

// Gradients of refine_level_fast w.r.t. the alpha/beta maps. Accumulates.
void refine_level_fast_backward(const Image& gauss_level, const ParamMaps& params,
                                const RemapConfig& cfg, const Image& grad_out,
                                Image& grad_alpha, Image& grad_beta);

// PPB head: conv stack to 2 channels, then alpha = softplus + 0.01 and
// beta = softplus, so the constraints hold for any finite input.
ParamMaps predict_params(const ConvNet& ppb, const Image& inputs, ConvTrace* trace = nullptr);
void predict_params_backward(const ConvNet& ppb, const ConvTrace& trace,
                             const Image& grad_alpha, const Image& grad_beta,
                             ConvNetGrads& grads, Image* grad_input);

struct LevelTrace {
    Image ppb_input;
    ConvTrace conv;
    ParamMaps params;
};
struct RefineTrace {
    std::vector<LevelTrace> levels; // indexed like the bands, finest first
};

// Progressive refinement. ppbs are ordered coarsest-first: ppbs[0] handles the
// 7-channel concatenation [band, up(low_raw), up(edge)] at level N-1; finer
// levels use the 6-channel [band, up(refined_coarser)]. Pyramids deeper than
// the ppb list share its last (finest) block.
std::vector<Image> refine_pyramid(const LaplacianPyramid& lap, const GaussianPyramid& gauss,
                                  const std::vector<ConvNet>& ppbs, const Image& low_raw,
                                  const EdgeMap& edge, const RemapConfig& cfg,
                                  RefineTrace* trace = nullptr);

// Index into ppbs for band k of an N-level pyramid under the sharing rule.
int ppb_index_for_level(int level, int depth, int ppb_count);

} // namespace lptm
