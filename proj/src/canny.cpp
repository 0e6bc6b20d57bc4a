#include "lptm/errors.hpp"
#include "lptm/image.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace lptm {

namespace {

int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

} // namespace

EdgeMap canny_edges(const Image& gray, double low_ratio, double high_ratio) {
    if (gray.channels != 1) throw ContractError("canny_edges: expected single-channel image");
    if (!(low_ratio > 0.0 && low_ratio < high_ratio && high_ratio <= 1.0))
        throw ContractError("canny_edges: need 0 < low_ratio < high_ratio <= 1");

    const int w = gray.width, h = gray.height;

    // 5x5 Gaussian blur (sigma 1), replicated edges
    double k[5], ksum = 0;
    for (int i = -2; i <= 2; ++i) {
        k[i + 2] = std::exp(-0.5 * i * i);
        ksum += k[i + 2];
    }
    for (double& v : k) v /= ksum;

    std::vector<double> tmp(std::size_t(w) * h), blur(std::size_t(w) * h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0;
            for (int t = -2; t <= 2; ++t) acc += k[t + 2] * gray.at(clampi(x + t, 0, w - 1), y);
            tmp[std::size_t(y) * w + x] = acc;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0;
            for (int t = -2; t <= 2; ++t) acc += k[t + 2] * tmp[std::size_t(clampi(y + t, 0, h - 1)) * w + x];
            blur[std::size_t(y) * w + x] = acc;
        }

    // Sobel gradients, replicated edges
    std::vector<double> gx(std::size_t(w) * h), gy(std::size_t(w) * h), mag(std::size_t(w) * h);
    double max_mag = 0;
    auto at = [&](int x, int y) { return blur[std::size_t(clampi(y, 0, h - 1)) * w + clampi(x, 0, w - 1)]; };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double dx = (at(x + 1, y - 1) - at(x - 1, y - 1)) + 2 * (at(x + 1, y) - at(x - 1, y)) +
                              (at(x + 1, y + 1) - at(x - 1, y + 1));
            const double dy = (at(x - 1, y + 1) - at(x - 1, y - 1)) + 2 * (at(x, y + 1) - at(x, y - 1)) +
                              (at(x + 1, y + 1) - at(x + 1, y - 1));
            gx[std::size_t(y) * w + x] = dx;
            gy[std::size_t(y) * w + x] = dy;
            const double m = std::sqrt(dx * dx + dy * dy);
            mag[std::size_t(y) * w + x] = m;
            max_mag = std::max(max_mag, m);
        }

    EdgeMap edges(w, h);
    if (max_mag <= 0.0) return edges;

    // Non-maximum suppression. Direction bins come from |gx|,|gy| comparisons
    // and the sign of gx*gy, which keeps the result exactly invariant under
    // intensity inversion. Kept pixels must beat the first neighbor strictly,
    // so symmetric two-pixel ridges thin to one pixel.
    const double t1 = 0.41421356237309503; // tan(22.5 deg)
    const double t2 = 2.4142135623730951;  // tan(67.5 deg)
    std::vector<std::uint8_t> keep(std::size_t(w) * h, 0);
    auto mag_at = [&](int x, int y) {
        return (x < 0 || x >= w || y < 0 || y >= h) ? 0.0 : mag[std::size_t(y) * w + x];
    };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const std::size_t i = std::size_t(y) * w + x;
            if (mag[i] <= 0.0) continue;
            const double ax = std::abs(gx[i]), ay = std::abs(gy[i]);
            int dx1, dy1;
            if (ay <= t1 * ax) {
                dx1 = 1, dy1 = 0; // horizontal gradient, vertical edge
            } else if (ay >= t2 * ax) {
                dx1 = 0, dy1 = 1;
            } else if (gx[i] * gy[i] >= 0) {
                dx1 = 1, dy1 = 1;
            } else {
                dx1 = 1, dy1 = -1;
            }
            const double a = mag_at(x - dx1, y - dy1);
            const double b = mag_at(x + dx1, y + dy1);
            if (mag[i] > a && mag[i] >= b) keep[i] = 1;
        }

    // hysteresis from strong seeds through weak 8-neighbors
    const double high = high_ratio * max_mag;
    const double low = low_ratio * max_mag;
    std::vector<std::size_t> stack;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const std::size_t i = std::size_t(y) * w + x;
            if (keep[i] && mag[i] >= high && !edges.data[i]) {
                edges.data[i] = 1;
                stack.push_back(i);
                while (!stack.empty()) {
                    const std::size_t j = stack.back();
                    stack.pop_back();
                    const int jx = int(j % w), jy = int(j / w);
                    for (int oy = -1; oy <= 1; ++oy)
                        for (int ox = -1; ox <= 1; ++ox) {
                            const int nx = jx + ox, ny = jy + oy;
                            if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
                            const std::size_t n = std::size_t(ny) * w + nx;
                            if (keep[n] && !edges.data[n] && mag[n] >= low) {
                                edges.data[n] = 1;
                                stack.push_back(n);
                            }
                        }
                }
            }
        }
    return edges;
}

} // namespace lptm
