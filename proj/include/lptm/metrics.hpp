#pragma once

#include "lptm/image.hpp"

namespace lptm {

// 10*log10(1/MSE) over all channels, capped at 99 dB (identical images report
// the cap). Inputs are expected in [0,1].
double psnr(const Image& a, const Image& b);

// Per-channel SSIM, 7x7 uniform window over fully valid positions, K1=0.01,
// K2=0.03, data range 1, sample-normalized (co)variances; channel mean.
double ssim(const Image& a, const Image& b);

// Mean Euclidean distance in CIELAB.
double delta_e(const Image& a, const Image& b);

} // namespace lptm
