#pragma once

#include "lptm/image.hpp"

#include <vector>

namespace lptm {

// High-frequency bands, finest first, plus the low-frequency residual.
// Band k and gauss level k share a size; sizes halve (ceil) level to level.
struct LaplacianPyramid {
    std::vector<Image> bands;
    Image low;
};

// levels[0] is the input, levels.back() equals the Laplacian low image.
struct GaussianPyramid {
    std::vector<Image> levels;
};

// max(1, round(log2(min(w,h)/target_low)))
int pyramid_depth(int w, int h, int target_low);

// Separable [1,4,6,4,1]/16 blur with replicated edges, then decimate by 2
// (ceil sizes).
Image downsample(const Image& img);

// Zero-insertion upsample to (w,h) with the gain-compensated kernel, realized
// as the two polyphase filters [1,6,1]/8 and [4,4]/8 over replicated edges.
// (w,h) must be a valid parent size: ceil(w/2) == img.width, ceil(h/2) == img.height.
Image upsample_to(const Image& img, int w, int h);

// Exact adjoints of the linear maps above, for reverse-mode gradients.
Image downsample_adjoint(const Image& grad, int src_w, int src_h);
Image upsample_to_adjoint(const Image& grad);

void decompose(const Image& img, int target_low, LaplacianPyramid& lap, GaussianPyramid& gauss);
void decompose_depth(const Image& img, int depth, LaplacianPyramid& lap, GaussianPyramid& gauss);

// x = low; for k = N-1..0: x = upsample_to(x, size_k) + band_k.
Image reconstruct(const std::vector<Image>& bands, const Image& low);

} // namespace lptm
