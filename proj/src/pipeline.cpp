#include "lptm/errors.hpp"
#include "lptm/pipeline.hpp"

#include <chrono>
#include <cmath>

namespace lptm {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

} // namespace

Image run_pipeline(const ModelState& s, const Image& input, const PipelineConfig& cfg,
                   PipelineTrace* trace, const EdgeMap* edge_override) {
    if (input.channels != 3) throw ContractError("run_pipeline: expected a 3-channel image");
    PipelineTrace local;
    PipelineTrace& tr = trace ? *trace : local;
    auto t0 = std::chrono::steady_clock::now();

    decompose(input, cfg.target_low, tr.lap, tr.gauss);
    tr.times.decompose = seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    tr.weights = predict_weights(s.weight_net, tr.lap.low, &tr.wnet);
    if (tr.weights.channels != int(s.luts.size()))
        throw ContractError("run_pipeline: weight predictor emits " +
                            std::to_string(tr.weights.channels) + " maps for " +
                            std::to_string(s.luts.size()) + " LUTs");
    tr.times.weights = seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    tr.lut_applied.clear();
    tr.i_low_hat = Image(tr.lap.low.width, tr.lap.low.height, 3);
    for (std::size_t n = 0; n < s.luts.size(); ++n) {
        Image applied = trilinear_apply(s.luts[n], tr.lap.low);
        const double* wmap = tr.weights.plane(int(n));
        for (int c = 0; c < 3; ++c) {
            double* dst = tr.i_low_hat.plane(c);
            const double* src = applied.plane(c);
            for (std::size_t p = 0; p < tr.i_low_hat.plane_size(); ++p) dst[p] += wmap[p] * src[p];
        }
        tr.lut_applied.push_back(std::move(applied));
    }
    tr.times.fuse = seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    if (edge_override) {
        tr.edge = *edge_override;
    } else {
        tr.edge = canny_edges(to_gray(clamp01(tr.i_low_hat)), cfg.canny_low, cfg.canny_high);
    }
    tr.times.edges = seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    if (cfg.refine_enabled) {
        tr.refined = refine_pyramid(tr.lap, tr.gauss, s.ppbs, tr.lap.low, tr.edge, cfg.remap,
                                    &tr.refine);
    } else {
        tr.refined = tr.lap.bands;
    }
    tr.times.refine = seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    tr.output = reconstruct(tr.refined, tr.i_low_hat);
    tr.times.reconstruct = seconds_since(t0);
    return tr.output;
}

void pipeline_backward(const ModelState& s, const PipelineTrace& trace, const PipelineConfig& cfg,
                       const Image& grad_output, const Image& grad_i_low_hat_extra,
                       ModelGrads& grads) {
    const int depth = int(trace.lap.bands.size());
    if (!grad_output.same_shape(trace.output))
        throw ContractError("pipeline_backward: grad_output shape mismatch");

    // reconstruct: x = low; for k = N-1..0: x = up(x) + band_k
    std::vector<Image> grad_band(static_cast<std::size_t>(depth));
    Image g = grad_output;
    for (int k = 0; k < depth; ++k) {
        grad_band[std::size_t(k)] = g;
        g = upsample_to_adjoint(g);
    }
    Image grad_low_hat = std::move(g);
    if (!grad_i_low_hat_extra.empty()) {
        if (!grad_i_low_hat_extra.same_shape(grad_low_hat))
            throw ContractError("pipeline_backward: low-term grad shape mismatch");
        for (std::size_t i = 0; i < grad_low_hat.data.size(); ++i)
            grad_low_hat.data[i] += grad_i_low_hat_extra.data[i];
    }

    // refinement, finest level first so coarser bands accumulate the gradients
    // arriving through the PPB inputs before they are consumed
    if (cfg.refine_enabled) {
        for (int k = 0; k < depth; ++k) {
            const LevelTrace& lt = trace.refine.levels[std::size_t(k)];
            const int idx = ppb_index_for_level(k, depth, int(s.ppbs.size()));
            if (idx < 0) continue; // band passed through unrefined
            Image grad_alpha, grad_beta;
            refine_level_fast_backward(trace.gauss.levels[std::size_t(k)], lt.params, cfg.remap,
                                       grad_band[std::size_t(k)], grad_alpha, grad_beta);
            Image grad_in;
            predict_params_backward(s.ppbs[std::size_t(idx)], lt.conv, grad_alpha, grad_beta,
                                    grads.ppbs[std::size_t(idx)],
                                    k + 1 < depth ? &grad_in : nullptr);
            if (k + 1 < depth) {
                // channels 3..5 of the PPB input are up(refined coarser band)
                Image gup(grad_in.width, grad_in.height, 3);
                for (int c = 0; c < 3; ++c)
                    std::copy(grad_in.plane(3 + c), grad_in.plane(3 + c) + grad_in.plane_size(),
                              gup.plane(c));
                const Image& coarser = trace.lap.bands[std::size_t(k) + 1];
                Image gprev = resize_bilinear_adjoint(gup, coarser.width, coarser.height);
                for (std::size_t i = 0; i < gprev.data.size(); ++i)
                    grad_band[std::size_t(k) + 1].data[i] += gprev.data[i];
            }
        }
    }

    // fusion: i_low_hat = sum_n w_n * applied_n
    const std::size_t ps = trace.i_low_hat.plane_size();
    Image grad_weights(trace.weights.width, trace.weights.height, trace.weights.channels);
    Image scaled(trace.lap.low.width, trace.lap.low.height, 3);
    for (std::size_t n = 0; n < s.luts.size(); ++n) {
        const double* wmap = trace.weights.plane(int(n));
        double* gw = grad_weights.plane(int(n));
        for (int c = 0; c < 3; ++c) {
            const double* gl = grad_low_hat.plane(c);
            const double* ap = trace.lut_applied[n].plane(c);
            double* sc = scaled.plane(c);
            for (std::size_t p = 0; p < ps; ++p) {
                gw[p] += gl[p] * ap[p];
                sc[p] = gl[p] * wmap[p];
            }
        }
        trilinear_backward(s.luts[n], trace.lap.low, scaled, &grads.luts[n], nullptr);
    }
    conv_backward(s.weight_net, trace.wnet, grad_weights, grads.weight_net, nullptr);
}

} // namespace lptm
