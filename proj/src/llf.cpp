#include "lptm/errors.hpp"
#include "lptm/llf.hpp"
#include "lptm/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace lptm {

namespace {

double clamp01d(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

inline double sign_of(double d) { return d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0); }

inline bool detail_branch(double i, double ad, double sigma_r, RemapBranch branch) {
    return branch == RemapBranch::AbsDiff ? ad <= sigma_r : i <= sigma_r;
}

// interpolation bracket for the sample ladder g_q = q/(K-1)
inline void bracket(double g, int k_samples, int& q0, double& t) {
    const double s = clamp01d(g) * (k_samples - 1);
    q0 = std::min(int(std::floor(s)), k_samples - 2);
    t = s - q0;
}

void check_level_shapes(const Image& gauss_level, const ParamMaps& params) {
    if (params.alpha.width != gauss_level.width || params.alpha.height != gauss_level.height ||
        params.alpha.channels != 1 || !params.beta.same_shape(params.alpha))
        throw ContractError("refine_level: alpha/beta maps must be single-channel at the level size");
}

} // namespace

double remap(double i, double g, double alpha, double beta, double sigma_r, RemapBranch branch) {
    const double d = i - g;
    const double ad = std::abs(d);
    const double sgn = sign_of(d);
    if (detail_branch(i, ad, sigma_r, branch))
        return g + sgn * sigma_r * std::pow(ad / sigma_r, alpha);
    return g + sgn * (beta * (ad - sigma_r) + sigma_r);
}

void remap_grad(double i, double g, double alpha, double beta, double sigma_r,
                double& d_alpha, double& d_beta, RemapBranch branch) {
    (void)beta;
    const double d = i - g;
    const double ad = std::abs(d);
    const double sgn = sign_of(d);
    if (detail_branch(i, ad, sigma_r, branch)) {
        // d/dalpha of sigma_r * u^alpha is sigma_r * u^alpha * ln u; limit 0 at u = 0
        d_alpha = ad == 0.0 ? 0.0
                            : sgn * sigma_r * std::pow(ad / sigma_r, alpha) * std::log(ad / sigma_r);
        d_beta = 0.0;
    } else {
        d_alpha = 0.0;
        d_beta = sgn * (ad - sigma_r);
    }
}

Image refine_level_fast(const Image& gauss_level, const Image& band, const ParamMaps& params,
                        const RemapConfig& cfg) {
    if (!gauss_level.same_shape(band))
        throw ContractError("refine_level_fast: gauss level and band sizes differ");
    check_level_shapes(gauss_level, params);
    if (cfg.k_samples < 2) throw ContractError("refine_level_fast: k_samples must be >= 2");

    const int w = gauss_level.width, h = gauss_level.height, ch = gauss_level.channels;
    const std::size_t ps = gauss_level.plane_size();
    const int K = cfg.k_samples;
    Image out(w, h, ch);
    Image remapped(w, h, ch);

    for (int q = 0; q < K; ++q) {
        const double gq = double(q) / (K - 1);
        for (int c = 0; c < ch; ++c) {
            const double* src = gauss_level.plane(c);
            double* dst = remapped.plane(c);
            parallel_for(int(ps), 8192, [&, src, dst](int i0, int i1) {
                for (int p = i0; p < i1; ++p)
                    dst[p] = remap(src[p], gq, params.alpha.data[p], params.beta.data[p],
                                   cfg.sigma_r, cfg.branch);
            });
        }
        // this sample's Laplacian coefficients at the level
        Image up = upsample_to(downsample(remapped), w, h);
        for (int c = 0; c < ch; ++c) {
            const double* g = gauss_level.plane(c);
            const double* r = remapped.plane(c);
            const double* u = up.plane(c);
            double* dst = out.plane(c);
            parallel_for(int(ps), 8192, [&, g, r, u, dst](int i0, int i1) {
                for (int p = i0; p < i1; ++p) {
                    int q0;
                    double t;
                    bracket(g[p], K, q0, t);
                    const double wgt = q == q0 ? 1.0 - t : (q == q0 + 1 ? t : 0.0);
                    if (wgt != 0.0) dst[p] += wgt * (r[p] - u[p]);
                }
            });
        }
    }
    return out;
}

Image refine_level_direct(const Image& gauss_level, const Image& band, const ParamMaps& params,
                          const RemapConfig& cfg) {
    if (!gauss_level.same_shape(band))
        throw ContractError("refine_level_direct: gauss level and band sizes differ");
    check_level_shapes(gauss_level, params);

    const int w = gauss_level.width, h = gauss_level.height, ch = gauss_level.channels;
    Image out(w, h, ch);
    for (int c = 0; c < ch; ++c) {
        Image plane(w, h, 1);
        std::copy(gauss_level.plane(c), gauss_level.plane(c) + plane.plane_size(), plane.data.begin());
        parallel_for(h, 4, [&](int y0, int y1) {
            Image remapped(w, h, 1);
            for (int y = y0; y < y1; ++y)
                for (int x = 0; x < w; ++x) {
                    const double g = plane.at(x, y);
                    const double a = params.alpha.at(x, y);
                    const double b = params.beta.at(x, y);
                    for (std::size_t p = 0; p < plane.plane_size(); ++p)
                        remapped.data[p] = remap(plane.data[p], g, a, b, cfg.sigma_r, cfg.branch);
                    Image up = upsample_to(downsample(remapped), w, h);
                    out.at(x, y, c) = remapped.at(x, y) - up.at(x, y);
                }
        });
    }
    return out;
}

void refine_level_fast_backward(const Image& gauss_level, const ParamMaps& params,
                                const RemapConfig& cfg, const Image& grad_out,
                                Image& grad_alpha, Image& grad_beta) {
    check_level_shapes(gauss_level, params);
    if (!grad_out.same_shape(gauss_level))
        throw ContractError("refine_level_fast_backward: grad shape mismatch");
    if (grad_alpha.empty()) grad_alpha = Image(gauss_level.width, gauss_level.height, 1);
    if (grad_beta.empty()) grad_beta = Image(gauss_level.width, gauss_level.height, 1);

    const int w = gauss_level.width, h = gauss_level.height, ch = gauss_level.channels;
    const std::size_t ps = gauss_level.plane_size();
    const int K = cfg.k_samples;

    Image grad_l(w, h, ch);
    for (int q = 0; q < K; ++q) {
        const double gq = double(q) / (K - 1);
        bool any = false;
        for (int c = 0; c < ch; ++c) {
            const double* g = gauss_level.plane(c);
            const double* go = grad_out.plane(c);
            double* dst = grad_l.plane(c);
            for (std::size_t p = 0; p < ps; ++p) {
                int q0;
                double t;
                bracket(g[p], K, q0, t);
                const double wgt = q == q0 ? 1.0 - t : (q == q0 + 1 ? t : 0.0);
                dst[p] = wgt * go[p];
                any = any || (dst[p] != 0.0);
            }
        }
        if (!any) continue;

        // adjoint of R - up(down(R))
        Image grad_r = grad_l;
        Image back = downsample_adjoint(upsample_to_adjoint(grad_l), w, h);
        for (std::size_t i = 0; i < grad_r.data.size(); ++i) grad_r.data[i] -= back.data[i];

        for (int c = 0; c < ch; ++c) {
            const double* g = gauss_level.plane(c);
            const double* gr = grad_r.plane(c);
            parallel_for(int(ps), 8192, [&, g, gr](int i0, int i1) {
                for (int p = i0; p < i1; ++p) {
                    if (gr[p] == 0.0) continue;
                    double da, db;
                    remap_grad(g[p], gq, params.alpha.data[p], params.beta.data[p], cfg.sigma_r,
                               da, db, cfg.branch);
                    grad_alpha.data[p] += gr[p] * da;
                    grad_beta.data[p] += gr[p] * db;
                }
            });
        }
    }
}

ParamMaps predict_params(const ConvNet& ppb, const Image& inputs, ConvTrace* trace) {
    if (ppb.layers.empty()) throw ContractError("predict_params: empty net");
    if (inputs.channels != ppb.layers.front().in_ch)
        throw ContractError("predict_params: input has " + std::to_string(inputs.channels) +
                            " channels, block expects " + std::to_string(ppb.layers.front().in_ch));
    if (ppb.layers.back().out_ch != 2)
        throw ContractError("predict_params: block must emit 2 channels");
    const Image raw = conv_forward(ppb, inputs, trace);
    ParamMaps maps;
    maps.alpha = Image(raw.width, raw.height, 1);
    maps.beta = Image(raw.width, raw.height, 1);
    const double* r0 = raw.plane(0);
    const double* r1 = raw.plane(1);
    for (std::size_t p = 0; p < maps.alpha.plane_size(); ++p) {
        maps.alpha.data[p] = softplus(r0[p]) + 0.01;
        maps.beta.data[p] = softplus(r1[p]);
    }
    return maps;
}

void predict_params_backward(const ConvNet& ppb, const ConvTrace& trace, const Image& grad_alpha,
                             const Image& grad_beta, ConvNetGrads& grads, Image* grad_input) {
    const Image& raw = trace.acts.back();
    Image grad_raw(raw.width, raw.height, 2);
    const double* r0 = raw.plane(0);
    const double* r1 = raw.plane(1);
    for (std::size_t p = 0; p < grad_raw.plane_size(); ++p) {
        grad_raw.plane(0)[p] = grad_alpha.data[p] * sigmoid(r0[p]);
        grad_raw.plane(1)[p] = grad_beta.data[p] * sigmoid(r1[p]);
    }
    conv_backward(ppb, trace, grad_raw, grads, grad_input);
}

int ppb_index_for_level(int level, int depth, int ppb_count) {
    if (ppb_count < 1) throw ContractError("ppb_index_for_level: no blocks");
    const int from_coarse = depth - 1 - level;
    if (from_coarse < ppb_count) return from_coarse;
    // beyond the trained depth, share the finest trained block; with only the
    // 7-channel coarsest block there is nothing structurally compatible to
    // share, so those levels pass through unrefined
    return ppb_count >= 2 ? ppb_count - 1 : -1;
}

namespace {

Image concat_channels(const std::vector<const Image*>& parts) {
    int ch = 0;
    for (const Image* p : parts) ch += p->channels;
    Image out(parts.front()->width, parts.front()->height, ch);
    int at = 0;
    for (const Image* p : parts) {
        for (int c = 0; c < p->channels; ++c, ++at)
            std::copy(p->plane(c), p->plane(c) + p->plane_size(), out.plane(at));
    }
    return out;
}

} // namespace

std::vector<Image> refine_pyramid(const LaplacianPyramid& lap, const GaussianPyramid& gauss,
                                  const std::vector<ConvNet>& ppbs, const Image& low_raw,
                                  const EdgeMap& edge, const RemapConfig& cfg, RefineTrace* trace) {
    const int depth = int(lap.bands.size());
    if (depth < 1) throw ContractError("refine_pyramid: empty pyramid");
    if (int(gauss.levels.size()) != depth + 1)
        throw ContractError("refine_pyramid: gaussian ladder does not match the band count");
    for (int k = 0; k < depth; ++k)
        if (!lap.bands[std::size_t(k)].same_shape(gauss.levels[std::size_t(k)]))
            throw ContractError("refine_pyramid: band/gauss size mismatch at level " + std::to_string(k));
    if (ppbs.empty()) throw ContractError("refine_pyramid: no parameter prediction blocks");
    if (edge.width != low_raw.width || edge.height != low_raw.height)
        throw ContractError("refine_pyramid: edge map size must match the low image");

    Image edge_img(edge.width, edge.height, 1);
    for (std::size_t i = 0; i < edge.data.size(); ++i) edge_img.data[i] = edge.data[i];

    std::vector<Image> refined(static_cast<std::size_t>(depth));
    if (trace) trace->levels.assign(std::size_t(depth), LevelTrace{});

    for (int k = depth - 1; k >= 0; --k) {
        const Image& band = lap.bands[std::size_t(k)];
        const int idx = ppb_index_for_level(k, depth, int(ppbs.size()));
        if (idx < 0) {
            refined[std::size_t(k)] = band;
            continue;
        }
        Image inputs;
        if (k == depth - 1) {
            const Image up_low = resize_bilinear(low_raw, band.width, band.height);
            const Image up_edge = resize_bilinear(edge_img, band.width, band.height);
            inputs = concat_channels({&band, &up_low, &up_edge});
        } else {
            const Image up_ref = resize_bilinear(refined[std::size_t(k) + 1], band.width, band.height);
            inputs = concat_channels({&band, &up_ref});
        }
        const ConvNet& ppb = ppbs[std::size_t(idx)];
        LevelTrace local;
        LevelTrace& lt = trace ? trace->levels[std::size_t(k)] : local;
        lt.params = predict_params(ppb, inputs, &lt.conv);
        refined[std::size_t(k)] =
            refine_level_fast(gauss.levels[std::size_t(k)], band, lt.params, cfg);
        if (trace) lt.ppb_input = std::move(inputs);
    }
    return refined;
}

} // namespace lptm
