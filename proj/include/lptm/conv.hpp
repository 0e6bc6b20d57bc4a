#pragma once

#include "lptm/image.hpp"
#include "lptm/rng.hpp"

#include <vector>

namespace lptm {

// 3x3 convolution layer, stride 1, zero padding equal to the dilation so the
// spatial size is preserved. kernel layout: [out][in][ky][kx].
struct ConvLayer {
    int in_ch = 0;
    int out_ch = 0;
    int dilation = 1;
    std::vector<double> kernel;
    std::vector<double> bias;

    double& k_at(int o, int i, int ky, int kx) {
        return kernel[((std::size_t(o) * in_ch + i) * 3 + ky) * 3 + kx];
    }
    double k_at(int o, int i, int ky, int kx) const {
        return kernel[((std::size_t(o) * in_ch + i) * 3 + ky) * 3 + kx];
    }
};

// Plain stack with a leaky rectifier (slope 0.1) between layers; the final
// layer output is raw.
struct ConvNet {
    std::vector<ConvLayer> layers;
    double leaky_slope = 0.1;
};

// acts[0] is the input; acts[l+1] the output of layer l (post-activation,
// except the last which stays raw). Kept for the backward pass.
struct ConvTrace {
    std::vector<Image> acts;
};

struct ConvLayerGrads {
    std::vector<double> kernel;
    std::vector<double> bias;
};
struct ConvNetGrads {
    std::vector<ConvLayerGrads> layers;
};

// channels = {in, h1, ..., out}; dilations has one entry per layer.
ConvNet make_conv_net(const std::vector<int>& channels, const std::vector<int>& dilations);

// Kaiming-uniform fan-in on all kernels, biases zero.
void kaiming_init(ConvNet& net, Rng& rng);

ConvNetGrads zero_grads(const ConvNet& net);
std::size_t param_count(const ConvNet& net);

Image conv_forward(const ConvNet& net, const Image& input, ConvTrace* trace = nullptr);

// Reverse mode through convolutions, biases and activations. grads must be
// shaped like the net (zero_grads); accumulates into it. grad_input optional.
void conv_backward(const ConvNet& net, const ConvTrace& trace, const Image& grad_out,
                   ConvNetGrads& grads, Image* grad_input = nullptr);

// Weight predictor: maps the 3-channel low image to one weight map per LUT.
Image predict_weights(const ConvNet& net, const Image& i_low, ConvTrace* trace = nullptr);

double softplus(double x);
double sigmoid(double x);

} // namespace lptm
