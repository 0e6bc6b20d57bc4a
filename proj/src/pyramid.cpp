#include "lptm/errors.hpp"
#include "lptm/parallel.hpp"
#include "lptm/pyramid.hpp"

#include <algorithm>
#include <cmath>

namespace lptm {

namespace {

constexpr double kTap0 = 6.0 / 16.0;
constexpr double kTap1 = 4.0 / 16.0;
constexpr double kTap2 = 1.0 / 16.0;

int half_up(int n) { return (n + 1) / 2; }
int clampi(int v, int hi) { return v < 0 ? 0 : (v > hi ? hi : v); }

// blur+decimate along x: out[i] = sum_t k[t] * in[clamp(2i+t-2)]
Image down_x(const Image& img) {
    const int ow = half_up(img.width);
    Image out(ow, img.height, img.channels);
    for (int c = 0; c < img.channels; ++c) {
        const double* src = img.plane(c);
        double* dst = out.plane(c);
        parallel_for(img.height, 64, [&, src, dst](int y0, int y1) {
            for (int y = y0; y < y1; ++y) {
                const double* row = src + std::size_t(y) * img.width;
                double* orow = dst + std::size_t(y) * ow;
                for (int i = 0; i < ow; ++i) {
                    const int x = 2 * i;
                    orow[i] = kTap2 * (row[clampi(x - 2, img.width - 1)] + row[clampi(x + 2, img.width - 1)]) +
                              kTap1 * (row[clampi(x - 1, img.width - 1)] + row[clampi(x + 1, img.width - 1)]) +
                              kTap0 * row[x];
                }
            }
        });
    }
    return out;
}

Image down_y(const Image& img) {
    const int oh = half_up(img.height);
    Image out(img.width, oh, img.channels);
    for (int c = 0; c < img.channels; ++c) {
        const double* src = img.plane(c);
        double* dst = out.plane(c);
        parallel_for(oh, 64, [&, src, dst](int i0, int i1) {
            for (int i = i0; i < i1; ++i) {
                const int y = 2 * i;
                const double* r0 = src + std::size_t(clampi(y - 2, img.height - 1)) * img.width;
                const double* r1 = src + std::size_t(clampi(y - 1, img.height - 1)) * img.width;
                const double* r2 = src + std::size_t(y) * img.width;
                const double* r3 = src + std::size_t(clampi(y + 1, img.height - 1)) * img.width;
                const double* r4 = src + std::size_t(clampi(y + 2, img.height - 1)) * img.width;
                double* orow = dst + std::size_t(i) * img.width;
                for (int x = 0; x < img.width; ++x)
                    orow[x] = kTap2 * (r0[x] + r4[x]) + kTap1 * (r1[x] + r3[x]) + kTap0 * r2[x];
            }
        });
    }
    return out;
}

Image down_x_adjoint(const Image& grad, int src_w) {
    Image out(src_w, grad.height, grad.channels);
    for (int c = 0; c < grad.channels; ++c) {
        const double* g = grad.plane(c);
        double* dst = out.plane(c);
        parallel_for(grad.height, 64, [&, g, dst](int y0, int y1) {
            for (int y = y0; y < y1; ++y) {
                const double* grow = g + std::size_t(y) * grad.width;
                double* orow = dst + std::size_t(y) * src_w;
                for (int i = 0; i < grad.width; ++i) {
                    const int x = 2 * i;
                    orow[clampi(x - 2, src_w - 1)] += kTap2 * grow[i];
                    orow[clampi(x - 1, src_w - 1)] += kTap1 * grow[i];
                    orow[x] += kTap0 * grow[i];
                    orow[clampi(x + 1, src_w - 1)] += kTap1 * grow[i];
                    orow[clampi(x + 2, src_w - 1)] += kTap2 * grow[i];
                }
            }
        });
    }
    return out;
}

Image down_y_adjoint(const Image& grad, int src_h) {
    Image out(grad.width, src_h, grad.channels);
    for (int c = 0; c < grad.channels; ++c) {
        const double* g = grad.plane(c);
        double* dst = out.plane(c);
        for (int i = 0; i < grad.height; ++i) {
            const int y = 2 * i;
            const double* grow = g + std::size_t(i) * grad.width;
            double* rows[5] = {
                dst + std::size_t(clampi(y - 2, src_h - 1)) * grad.width,
                dst + std::size_t(clampi(y - 1, src_h - 1)) * grad.width,
                dst + std::size_t(y) * grad.width,
                dst + std::size_t(clampi(y + 1, src_h - 1)) * grad.width,
                dst + std::size_t(clampi(y + 2, src_h - 1)) * grad.width,
            };
            for (int x = 0; x < grad.width; ++x) {
                rows[0][x] += kTap2 * grow[x];
                rows[1][x] += kTap1 * grow[x];
                rows[2][x] += kTap0 * grow[x];
                rows[3][x] += kTap1 * grow[x];
                rows[4][x] += kTap2 * grow[x];
            }
        }
    }
    return out;
}

// Zero-insert + gain-compensated blur along x, written as the two polyphase
// filters over the source samples with replicated edges:
//   out[2i]   = (in[i-1] + 6 in[i] + in[i+1]) / 8
//   out[2i+1] = (in[i] + in[i+1]) / 2
Image up_x(const Image& img, int ow) {
    Image out(ow, img.height, img.channels);
    for (int c = 0; c < img.channels; ++c) {
        const double* src = img.plane(c);
        double* dst = out.plane(c);
        parallel_for(img.height, 64, [&, src, dst](int y0, int y1) {
            for (int y = y0; y < y1; ++y) {
                const double* row = src + std::size_t(y) * img.width;
                double* orow = dst + std::size_t(y) * ow;
                for (int x = 0; x < ow; ++x) {
                    const int i = x >> 1;
                    if ((x & 1) == 0) {
                        orow[x] = (row[clampi(i - 1, img.width - 1)] + 6.0 * row[i] +
                                   row[clampi(i + 1, img.width - 1)]) /
                                  8.0;
                    } else {
                        orow[x] = 0.5 * (row[i] + row[clampi(i + 1, img.width - 1)]);
                    }
                }
            }
        });
    }
    return out;
}

Image up_y(const Image& img, int oh) {
    Image out(img.width, oh, img.channels);
    for (int c = 0; c < img.channels; ++c) {
        const double* src = img.plane(c);
        double* dst = out.plane(c);
        parallel_for(oh, 64, [&, src, dst](int y0, int y1) {
            for (int y = y0; y < y1; ++y) {
                const int i = y >> 1;
                double* orow = dst + std::size_t(y) * img.width;
                if ((y & 1) == 0) {
                    const double* a = src + std::size_t(clampi(i - 1, img.height - 1)) * img.width;
                    const double* b = src + std::size_t(i) * img.width;
                    const double* d = src + std::size_t(clampi(i + 1, img.height - 1)) * img.width;
                    for (int x = 0; x < img.width; ++x) orow[x] = (a[x] + 6.0 * b[x] + d[x]) / 8.0;
                } else {
                    const double* b = src + std::size_t(i) * img.width;
                    const double* d = src + std::size_t(clampi(i + 1, img.height - 1)) * img.width;
                    for (int x = 0; x < img.width; ++x) orow[x] = 0.5 * (b[x] + d[x]);
                }
            }
        });
    }
    return out;
}

Image up_x_adjoint(const Image& grad) {
    const int sw = half_up(grad.width);
    Image out(sw, grad.height, grad.channels);
    for (int c = 0; c < grad.channels; ++c) {
        const double* g = grad.plane(c);
        double* dst = out.plane(c);
        parallel_for(grad.height, 64, [&, g, dst](int y0, int y1) {
            for (int y = y0; y < y1; ++y) {
                const double* grow = g + std::size_t(y) * grad.width;
                double* orow = dst + std::size_t(y) * sw;
                for (int x = 0; x < grad.width; ++x) {
                    const int i = x >> 1;
                    if ((x & 1) == 0) {
                        orow[clampi(i - 1, sw - 1)] += grow[x] / 8.0;
                        orow[i] += 6.0 * grow[x] / 8.0;
                        orow[clampi(i + 1, sw - 1)] += grow[x] / 8.0;
                    } else {
                        orow[i] += 0.5 * grow[x];
                        orow[clampi(i + 1, sw - 1)] += 0.5 * grow[x];
                    }
                }
            }
        });
    }
    return out;
}

Image up_y_adjoint(const Image& grad) {
    const int sh = half_up(grad.height);
    Image out(grad.width, sh, grad.channels);
    for (int c = 0; c < grad.channels; ++c) {
        const double* g = grad.plane(c);
        double* dst = out.plane(c);
        for (int y = 0; y < grad.height; ++y) {
            const int i = y >> 1;
            const double* grow = g + std::size_t(y) * grad.width;
            if ((y & 1) == 0) {
                double* a = dst + std::size_t(clampi(i - 1, sh - 1)) * grad.width;
                double* b = dst + std::size_t(i) * grad.width;
                double* d = dst + std::size_t(clampi(i + 1, sh - 1)) * grad.width;
                for (int x = 0; x < grad.width; ++x) {
                    a[x] += grow[x] / 8.0;
                    b[x] += 6.0 * grow[x] / 8.0;
                    d[x] += grow[x] / 8.0;
                }
            } else {
                double* b = dst + std::size_t(i) * grad.width;
                double* d = dst + std::size_t(clampi(i + 1, sh - 1)) * grad.width;
                for (int x = 0; x < grad.width; ++x) {
                    b[x] += 0.5 * grow[x];
                    d[x] += 0.5 * grow[x];
                }
            }
        }
    }
    return out;
}

} // namespace

int pyramid_depth(int w, int h, int target_low) {
    if (target_low < 1) throw ContractError("pyramid_depth: target_low must be >= 1");
    if (std::min(w, h) < target_low)
        throw ContractError("pyramid_depth: image smaller than target_low");
    const double levels = std::log2(double(std::min(w, h)) / target_low);
    return std::max(1, int(std::lround(levels)));
}

Image downsample(const Image& img) {
    if (img.empty()) throw ContractError("downsample: empty image");
    return down_y(down_x(img));
}

Image downsample_adjoint(const Image& grad, int src_w, int src_h) {
    if (half_up(src_w) != grad.width || half_up(src_h) != grad.height)
        throw ContractError("downsample_adjoint: size mismatch");
    return down_x_adjoint(down_y_adjoint(grad, src_h), src_w);
}

Image upsample_to(const Image& img, int w, int h) {
    if (half_up(w) != img.width || half_up(h) != img.height)
        throw ContractError("upsample_to: (w,h) is not a valid parent size");
    return up_y(up_x(img, w), h);
}

Image upsample_to_adjoint(const Image& grad) {
    return up_x_adjoint(up_y_adjoint(grad));
}

void decompose(const Image& img, int target_low, LaplacianPyramid& lap, GaussianPyramid& gauss) {
    decompose_depth(img, pyramid_depth(img.width, img.height, target_low), lap, gauss);
}

void decompose_depth(const Image& img, int depth, LaplacianPyramid& lap, GaussianPyramid& gauss) {
    if (depth < 1) throw ContractError("decompose: depth must be >= 1");
    lap.bands.clear();
    gauss.levels.clear();
    gauss.levels.push_back(img);
    for (int k = 0; k < depth; ++k) {
        const Image& g = gauss.levels.back();
        Image next = downsample(g);
        Image up = upsample_to(next, g.width, g.height);
        Image band(g.width, g.height, g.channels);
        for (std::size_t i = 0; i < band.data.size(); ++i) band.data[i] = g.data[i] - up.data[i];
        lap.bands.push_back(std::move(band));
        gauss.levels.push_back(std::move(next));
    }
    lap.low = gauss.levels.back();
}

Image reconstruct(const std::vector<Image>& bands, const Image& low) {
    if (bands.empty()) throw ContractError("reconstruct: no bands");
    const Image* below = &low;
    for (int k = int(bands.size()) - 1; k >= 0; --k) {
        const Image& b = bands[std::size_t(k)];
        if (half_up(b.width) != below->width || half_up(b.height) != below->height ||
            b.channels != below->channels)
            throw ContractError("reconstruct: inconsistent band ladder at level " + std::to_string(k));
        below = &b;
    }
    Image x = low;
    for (int k = int(bands.size()) - 1; k >= 0; --k) {
        const Image& b = bands[std::size_t(k)];
        Image up = upsample_to(x, b.width, b.height);
        for (std::size_t i = 0; i < up.data.size(); ++i) up.data[i] += b.data[i];
        x = std::move(up);
    }
    return x;
}

} // namespace lptm
