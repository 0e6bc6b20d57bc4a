#include "lptm/errors.hpp"
#include "lptm/image.hpp"
#include "lptm/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace lptm {

Image to_gray(const Image& img) {
    if (img.channels == 1) return img;
    if (img.channels != 3) throw ContractError("to_gray: expected 1 or 3 channels");
    Image out(img.width, img.height, 1);
    const double* r = img.plane(0);
    const double* g = img.plane(1);
    const double* b = img.plane(2);
    for (std::size_t i = 0; i < out.plane_size(); ++i)
        out.data[i] = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
    return out;
}

Image clamp01(const Image& img) {
    Image out = img;
    for (double& v : out.data) v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    return out;
}

Image flip_horizontal(const Image& img) {
    Image out(img.width, img.height, img.channels);
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                out.at(x, y, c) = img.at(img.width - 1 - x, y, c);
    return out;
}

Image flip_vertical(const Image& img) {
    Image out(img.width, img.height, img.channels);
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                out.at(x, y, c) = img.at(x, img.height - 1 - y, c);
    return out;
}

Image resize_bilinear(const Image& img, int w, int h) {
    if (w < 1 || h < 1) throw ContractError("resize_bilinear: target size must be >= 1");
    if (img.empty()) throw ContractError("resize_bilinear: empty image");
    Image out(w, h, img.channels);
    const double sx = double(img.width) / w;
    const double sy = double(img.height) / h;
    for (int c = 0; c < img.channels; ++c) {
        const double* src = img.plane(c);
        double* dst = out.plane(c);
        parallel_for(h, 32, [&, src, dst](int y0, int y1) {
            for (int y = y0; y < y1; ++y) {
                const double fy = (y + 0.5) * sy - 0.5;
                int iy = int(std::floor(fy));
                double ty = fy - iy;
                const int y_lo = std::clamp(iy, 0, img.height - 1);
                const int y_hi = std::clamp(iy + 1, 0, img.height - 1);
                for (int x = 0; x < w; ++x) {
                    const double fx = (x + 0.5) * sx - 0.5;
                    int ix = int(std::floor(fx));
                    double tx = fx - ix;
                    const int x_lo = std::clamp(ix, 0, img.width - 1);
                    const int x_hi = std::clamp(ix + 1, 0, img.width - 1);
                    const double top = (1.0 - tx) * src[std::size_t(y_lo) * img.width + x_lo] +
                                       tx * src[std::size_t(y_lo) * img.width + x_hi];
                    const double bot = (1.0 - tx) * src[std::size_t(y_hi) * img.width + x_lo] +
                                       tx * src[std::size_t(y_hi) * img.width + x_hi];
                    dst[std::size_t(y) * w + x] = (1.0 - ty) * top + ty * bot;
                }
            }
        });
    }
    return out;
}

Image resize_bilinear_adjoint(const Image& grad, int src_w, int src_h) {
    Image out(src_w, src_h, grad.channels);
    const double sx = double(src_w) / grad.width;
    const double sy = double(src_h) / grad.height;
    for (int c = 0; c < grad.channels; ++c) {
        const double* g = grad.plane(c);
        double* dst = out.plane(c);
        for (int y = 0; y < grad.height; ++y) {
            const double fy = (y + 0.5) * sy - 0.5;
            int iy = int(std::floor(fy));
            double ty = fy - iy;
            const int y_lo = std::clamp(iy, 0, src_h - 1);
            const int y_hi = std::clamp(iy + 1, 0, src_h - 1);
            for (int x = 0; x < grad.width; ++x) {
                const double fx = (x + 0.5) * sx - 0.5;
                int ix = int(std::floor(fx));
                double tx = fx - ix;
                const int x_lo = std::clamp(ix, 0, src_w - 1);
                const int x_hi = std::clamp(ix + 1, 0, src_w - 1);
                const double gv = g[std::size_t(y) * grad.width + x];
                dst[std::size_t(y_lo) * src_w + x_lo] += (1.0 - ty) * (1.0 - tx) * gv;
                dst[std::size_t(y_lo) * src_w + x_hi] += (1.0 - ty) * tx * gv;
                dst[std::size_t(y_hi) * src_w + x_lo] += ty * (1.0 - tx) * gv;
                dst[std::size_t(y_hi) * src_w + x_hi] += ty * tx * gv;
            }
        }
    }
    return out;
}

namespace {

double srgb_to_linear(double v) {
    return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
}

double lab_f(double t) {
    constexpr double delta = 6.0 / 29.0;
    constexpr double d3 = delta * delta * delta;
    return t > d3 ? std::cbrt(t) : t / (3.0 * delta * delta) + 4.0 / 29.0;
}

} // namespace

Image rgb_to_lab(const Image& img) {
    if (img.channels != 3) throw ContractError("rgb_to_lab: expected 3 channels");
    // D65 white point = row sums of the sRGB matrix, so the gray axis maps to a=b=0
    constexpr double xn = 0.4124564 + 0.3575761 + 0.1804375;
    constexpr double yn = 0.2126729 + 0.7151522 + 0.0721750;
    constexpr double zn = 0.0193339 + 0.1191920 + 0.9503041;
    Image out(img.width, img.height, 3);
    for (std::size_t i = 0; i < img.plane_size(); ++i) {
        const double r = srgb_to_linear(img.plane(0)[i]);
        const double g = srgb_to_linear(img.plane(1)[i]);
        const double b = srgb_to_linear(img.plane(2)[i]);
        const double x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
        const double y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
        const double z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
        const double fx = lab_f(x / xn);
        const double fy = lab_f(y / yn);
        const double fz = lab_f(z / zn);
        out.plane(0)[i] = 116.0 * fy - 16.0;
        out.plane(1)[i] = 500.0 * (fx - fy);
        out.plane(2)[i] = 200.0 * (fy - fz);
    }
    return out;
}

} // namespace lptm
