#include "lptm/conv.hpp"
#include "lptm/errors.hpp"
#include "lptm/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace lptm {

double softplus(double x) {
    return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
    if (x >= 0) {
        const double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

ConvNet make_conv_net(const std::vector<int>& channels, const std::vector<int>& dilations) {
    if (channels.size() < 2 || dilations.size() != channels.size() - 1)
        throw ContractError("make_conv_net: need N+1 channel counts for N dilations");
    ConvNet net;
    for (std::size_t l = 0; l + 1 < channels.size(); ++l) {
        ConvLayer layer;
        layer.in_ch = channels[l];
        layer.out_ch = channels[l + 1];
        layer.dilation = dilations[l];
        layer.kernel.assign(std::size_t(layer.out_ch) * layer.in_ch * 9, 0.0);
        layer.bias.assign(std::size_t(layer.out_ch), 0.0);
        net.layers.push_back(std::move(layer));
    }
    return net;
}

void kaiming_init(ConvNet& net, Rng& rng) {
    for (ConvLayer& layer : net.layers) {
        const double bound = std::sqrt(6.0 / (double(layer.in_ch) * 9.0));
        for (double& w : layer.kernel) w = rng.uniform(-bound, bound);
        std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
    }
}

ConvNetGrads zero_grads(const ConvNet& net) {
    ConvNetGrads g;
    g.layers.resize(net.layers.size());
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        g.layers[l].kernel.assign(net.layers[l].kernel.size(), 0.0);
        g.layers[l].bias.assign(net.layers[l].bias.size(), 0.0);
    }
    return g;
}

std::size_t param_count(const ConvNet& net) {
    std::size_t n = 0;
    for (const ConvLayer& layer : net.layers) n += layer.kernel.size() + layer.bias.size();
    return n;
}

namespace {

// one 3x3 layer, zero padding = dilation, output rows parallel
Image conv_layer_forward(const ConvLayer& layer, const Image& in) {
    const int w = in.width, h = in.height, d = layer.dilation;
    Image out(w, h, layer.out_ch);
    parallel_for(h, 8, [&](int y0, int y1) {
        for (int o = 0; o < layer.out_ch; ++o) {
            double* dst = out.plane(o);
            for (int y = y0; y < y1; ++y) {
                double* orow = dst + std::size_t(y) * w;
                for (int x = 0; x < w; ++x) orow[x] = layer.bias[o];
                for (int i = 0; i < layer.in_ch; ++i) {
                    const double* src = in.plane(i);
                    for (int ky = 0; ky < 3; ++ky) {
                        const int sy = y + d * (ky - 1);
                        if (sy < 0 || sy >= h) continue;
                        const double* srow = src + std::size_t(sy) * w;
                        for (int kx = 0; kx < 3; ++kx) {
                            const double wgt = layer.k_at(o, i, ky, kx);
                            if (wgt == 0.0) continue;
                            const int off = d * (kx - 1);
                            const int x_lo = std::max(0, -off);
                            const int x_hi = std::min(w, w - off);
                            for (int x = x_lo; x < x_hi; ++x) orow[x] += wgt * srow[x + off];
                        }
                    }
                }
            }
        }
    });
    return out;
}

void leaky_forward(Image& img, double slope) {
    for (double& v : img.data)
        if (v < 0) v *= slope;
}

} // namespace

Image conv_forward(const ConvNet& net, const Image& input, ConvTrace* trace) {
    if (net.layers.empty()) throw ContractError("conv_forward: empty net");
    if (input.channels != net.layers.front().in_ch)
        throw ContractError("conv_forward: input has " + std::to_string(input.channels) +
                            " channels, net expects " + std::to_string(net.layers.front().in_ch));
    if (trace) {
        trace->acts.clear();
        trace->acts.push_back(input);
    }
    Image x = input;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        x = conv_layer_forward(net.layers[l], x);
        if (l + 1 < net.layers.size()) leaky_forward(x, net.leaky_slope);
        if (trace) trace->acts.push_back(x);
    }
    return x;
}

void conv_backward(const ConvNet& net, const ConvTrace& trace, const Image& grad_out,
                   ConvNetGrads& grads, Image* grad_input) {
    if (trace.acts.size() != net.layers.size() + 1)
        throw ContractError("conv_backward: trace does not match net");
    if (grads.layers.size() != net.layers.size())
        throw ContractError("conv_backward: grads not shaped like net");

    Image g = grad_out;
    for (int l = int(net.layers.size()) - 1; l >= 0; --l) {
        const ConvLayer& layer = net.layers[std::size_t(l)];
        const Image& in = trace.acts[std::size_t(l)];
        const int w = in.width, h = in.height, d = layer.dilation;

        // activation backward (the stored output is post-activation; its sign
        // matches the pre-activation sign for a leaky rectifier)
        if (l + 1 < int(net.layers.size())) {
            const Image& post = trace.acts[std::size_t(l) + 1];
            for (std::size_t i = 0; i < g.data.size(); ++i)
                if (post.data[i] < 0) g.data[i] *= net.leaky_slope;
        }

        ConvLayerGrads& lg = grads.layers[std::size_t(l)];

        // bias and kernel gradients, chunked over rows with ordered merges
        const int grain = 8;
        const int chunks = chunk_count(h, grain);
        std::vector<std::vector<double>> kpart(static_cast<std::size_t>(chunks));
        std::vector<std::vector<double>> bpart(static_cast<std::size_t>(chunks));
        parallel_chunks(h, grain, [&](int chunk, int y0, int y1) {
            auto& kp = kpart[std::size_t(chunk)];
            auto& bp = bpart[std::size_t(chunk)];
            kp.assign(layer.kernel.size(), 0.0);
            bp.assign(layer.bias.size(), 0.0);
            for (int o = 0; o < layer.out_ch; ++o) {
                const double* gp = g.plane(o);
                for (int y = y0; y < y1; ++y) {
                    const double* grow = gp + std::size_t(y) * w;
                    for (int x = 0; x < w; ++x) bp[std::size_t(o)] += grow[x];
                    for (int i = 0; i < layer.in_ch; ++i) {
                        const double* src = in.plane(i);
                        for (int ky = 0; ky < 3; ++ky) {
                            const int sy = y + d * (ky - 1);
                            if (sy < 0 || sy >= h) continue;
                            const double* srow = src + std::size_t(sy) * w;
                            for (int kx = 0; kx < 3; ++kx) {
                                const int off = d * (kx - 1);
                                const int x_lo = std::max(0, -off);
                                const int x_hi = std::min(w, w - off);
                                double acc = 0;
                                for (int x = x_lo; x < x_hi; ++x) acc += grow[x] * srow[x + off];
                                kp[((std::size_t(o) * layer.in_ch + i) * 3 + ky) * 3 + kx] += acc;
                            }
                        }
                    }
                }
            }
        });
        for (int c = 0; c < chunks; ++c) {
            for (std::size_t i = 0; i < lg.kernel.size(); ++i) lg.kernel[i] += kpart[std::size_t(c)][i];
            for (std::size_t i = 0; i < lg.bias.size(); ++i) lg.bias[i] += bpart[std::size_t(c)][i];
        }

        // input gradient (gather form, race-free over rows)
        const bool need_input = l > 0 || grad_input != nullptr;
        if (!need_input) break;
        Image gin(w, h, layer.in_ch);
        parallel_for(h, 8, [&](int y0, int y1) {
            for (int i = 0; i < layer.in_ch; ++i) {
                double* dst = gin.plane(i);
                for (int y = y0; y < y1; ++y) {
                    double* drow = dst + std::size_t(y) * w;
                    for (int o = 0; o < layer.out_ch; ++o) {
                        const double* gp = g.plane(o);
                        for (int ky = 0; ky < 3; ++ky) {
                            const int gy = y - d * (ky - 1);
                            if (gy < 0 || gy >= h) continue;
                            const double* grow = gp + std::size_t(gy) * w;
                            for (int kx = 0; kx < 3; ++kx) {
                                const double wgt = layer.k_at(o, i, ky, kx);
                                if (wgt == 0.0) continue;
                                const int off = d * (kx - 1);
                                const int x_lo = std::max(0, off);
                                const int x_hi = std::min(w, w + off);
                                for (int x = x_lo; x < x_hi; ++x) drow[x] += wgt * grow[x - off];
                            }
                        }
                    }
                }
            }
        });
        g = std::move(gin);
    }
    if (grad_input) *grad_input = std::move(g);
}

Image predict_weights(const ConvNet& net, const Image& i_low, ConvTrace* trace) {
    if (i_low.channels != 3) throw ContractError("predict_weights: expected 3-channel low image");
    return conv_forward(net, i_low, trace);
}

} // namespace lptm
