#pragma once

#include "lptm/image.hpp"

#include <string>
#include <vector>

namespace lptm {

// 3D lattice over RGB. Entry (i,j,k) holds the output color for input
// (i,j,k)/(n_bins-1); the red index varies fastest:
//   lattice[((k*n + j)*n + i)*3 + c]
struct Lut3d {
    int n_bins = 33;
    std::vector<double> lattice;

    double& at(int i, int j, int k, int c) {
        return lattice[((std::size_t(k) * n_bins + j) * n_bins + i) * 3 + c];
    }
    double at(int i, int j, int k, int c) const {
        return lattice[((std::size_t(k) * n_bins + j) * n_bins + i) * 3 + c];
    }
    std::size_t size() const { return lattice.size(); }
};

Lut3d identity_lut(int n_bins);
Lut3d zero_lut(int n_bins);

// Trilinear interpolation of the 8 surrounding lattice entries per pixel.
// Inputs are clamped to [0,1]; v = 1 lands in the last cell with fraction 1.
Image trilinear_apply(const Lut3d& lut, const Image& img);

// Pixel-level fusion: O(p) = sum_n weights[n](p) * trilinear_apply(luts[n], img)(p).
// weights carries one channel per LUT at the resolution of img.
Image fuse_apply(const std::vector<Lut3d>& luts, const Image& weights, const Image& img);

// grad_lattice accumulates grad_out times the trilinear corner weight;
// grad_img gets the piecewise-linear derivative w.r.t. the input color,
// one-sided at cell boundaries. Either output may be null.
void trilinear_backward(const Lut3d& lut, const Image& img, const Image& grad_out,
                        std::vector<double>* grad_lattice, Image* grad_img);

// Sum of squared forward differences along all three axes, all channels.
double smoothness_reg(const Lut3d& lut);
// Squared hinge on decreasing steps along all three axes, all channels.
double monotonicity_reg(const Lut3d& lut);

void smoothness_reg_grad(const Lut3d& lut, double scale, std::vector<double>& grad_lattice);
void monotonicity_reg_grad(const Lut3d& lut, double scale, std::vector<double>& grad_lattice);

// Adobe Cube text format, LUT_3D_SIZE header, red fastest, 6 decimals on write.
Lut3d read_cube(const std::string& path);
void write_cube(const Lut3d& lut, const std::string& path);

} // namespace lptm
