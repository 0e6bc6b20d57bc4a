#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace lptm {

// Planar raster, channel-major: data[(c*height + y)*width + x].
// Pipeline images hold values in [0,1] with 1 or 3 channels; pyramid bands and
// network activations reuse the container with signed values and arbitrary
// channel counts.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h, int c, double fill = 0.0)
        : width(w), height(h), channels(c),
          data(std::size_t(w) * h * c, fill) {}

    double& at(int x, int y, int c = 0) {
        return data[(std::size_t(c) * height + y) * width + x];
    }
    double at(int x, int y, int c = 0) const {
        return data[(std::size_t(c) * height + y) * width + x];
    }
    double* plane(int c) { return data.data() + std::size_t(c) * height * width; }
    const double* plane(int c) const { return data.data() + std::size_t(c) * height * width; }

    std::size_t plane_size() const { return std::size_t(width) * height; }
    bool same_shape(const Image& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }
    bool empty() const { return data.empty(); }
};

// Binary edge mask, values in {0,1}.
struct EdgeMap {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;

    EdgeMap() = default;
    EdgeMap(int w, int h) : width(w), height(h), data(std::size_t(w) * h, 0) {}
    std::uint8_t at(int x, int y) const { return data[std::size_t(y) * width + x]; }
    std::uint8_t& at(int x, int y) { return data[std::size_t(y) * width + x]; }
};

// ---- file I/O ----
// PNG (8/16-bit gray or RGB), binary PPM/PGM (maxval 255/65535) and PFM.
// Loads normalize to [0,1] and clamp; PFM data passes through the clamp only.
Image load_image(const std::string& path);

// Quantizes with round-half-up to 2^bitdepth-1 after clamping to [0,1].
// Format follows the extension (.png/.ppm/.pgm/.pfm); PFM ignores bitdepth.
void save_image(const Image& img, const std::string& path, int bitdepth = 8);

// (width, height) from the file header without decoding pixel data.
std::pair<int, int> probe_image_size(const std::string& path);

// PFM without the [0,1] clamp, for signed data such as pyramid band dumps.
Image load_pfm_raw(const std::string& path);

// ---- pixel ops ----
Image to_gray(const Image& img); // 0.299 R + 0.587 G + 0.114 B; 1-channel input passes through
Image resize_bilinear(const Image& img, int w, int h); // align-corners=false, edge clamp
Image resize_bilinear_adjoint(const Image& grad, int src_w, int src_h);
Image rgb_to_lab(const Image& img); // sRGB in [0,1] -> CIELAB (D65)
Image flip_horizontal(const Image& img);
Image flip_vertical(const Image& img);
Image clamp01(const Image& img);

// Canny: 5x5 Gaussian (sigma 1.0), Sobel, 4-direction non-maximum suppression,
// hysteresis at low/high ratios of the max gradient magnitude.
EdgeMap canny_edges(const Image& gray, double low_ratio = 0.1, double high_ratio = 0.2);

} // namespace lptm
