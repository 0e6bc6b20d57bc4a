#include "lptm/errors.hpp"
#include "lptm/lut.hpp"
#include "lptm/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace lptm {

namespace {

double clamp01d(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

struct CellIndex {
    int cell[3];
    double frac[3];
};

inline CellIndex locate(const Lut3d& lut, double r, double g, double b) {
    CellIndex ci;
    const double v[3] = {clamp01d(r), clamp01d(g), clamp01d(b)};
    for (int a = 0; a < 3; ++a) {
        const double s = v[a] * (lut.n_bins - 1);
        int cell = int(std::floor(s));
        cell = std::clamp(cell, 0, lut.n_bins - 2);
        ci.cell[a] = cell;
        ci.frac[a] = s - cell;
    }
    return ci;
}

} // namespace

Lut3d identity_lut(int n_bins) {
    if (n_bins < 2) throw ContractError("identity_lut: n_bins must be >= 2");
    Lut3d lut;
    lut.n_bins = n_bins;
    lut.lattice.resize(std::size_t(n_bins) * n_bins * n_bins * 3);
    const double inv = 1.0 / (n_bins - 1);
    for (int k = 0; k < n_bins; ++k)
        for (int j = 0; j < n_bins; ++j)
            for (int i = 0; i < n_bins; ++i) {
                lut.at(i, j, k, 0) = i * inv;
                lut.at(i, j, k, 1) = j * inv;
                lut.at(i, j, k, 2) = k * inv;
            }
    return lut;
}

Lut3d zero_lut(int n_bins) {
    if (n_bins < 2) throw ContractError("zero_lut: n_bins must be >= 2");
    Lut3d lut;
    lut.n_bins = n_bins;
    lut.lattice.assign(std::size_t(n_bins) * n_bins * n_bins * 3, 0.0);
    return lut;
}

Image trilinear_apply(const Lut3d& lut, const Image& img) {
    if (img.channels != 3) throw ContractError("trilinear_apply: expected 3-channel image");
    Image out(img.width, img.height, 3);
    const std::size_t ps = img.plane_size();
    parallel_for(int(ps), 4096, [&](int i0, int i1) {
        for (int p = i0; p < i1; ++p) {
            const CellIndex ci = locate(lut, img.data[p], img.data[ps + p], img.data[2 * ps + p]);
            const double fr = ci.frac[0], fg = ci.frac[1], fb = ci.frac[2];
            for (int c = 0; c < 3; ++c) {
                double acc = 0;
                for (int dk = 0; dk < 2; ++dk)
                    for (int dj = 0; dj < 2; ++dj)
                        for (int di = 0; di < 2; ++di) {
                            const double wgt = (di ? fr : 1 - fr) * (dj ? fg : 1 - fg) * (dk ? fb : 1 - fb);
                            acc += wgt * lut.at(ci.cell[0] + di, ci.cell[1] + dj, ci.cell[2] + dk, c);
                        }
                out.data[std::size_t(c) * ps + p] = acc;
            }
        }
    });
    return out;
}

Image fuse_apply(const std::vector<Lut3d>& luts, const Image& weights, const Image& img) {
    if (luts.empty()) throw ContractError("fuse_apply: no LUTs");
    if (weights.channels != int(luts.size()))
        throw ContractError("fuse_apply: weight map count does not match LUT count");
    if (weights.width != img.width || weights.height != img.height)
        throw ContractError("fuse_apply: weight resolution does not match image");
    Image out(img.width, img.height, 3);
    for (std::size_t nidx = 0; nidx < luts.size(); ++nidx) {
        const Image applied = trilinear_apply(luts[nidx], img);
        const double* wmap = weights.plane(int(nidx));
        for (int c = 0; c < 3; ++c) {
            double* dst = out.plane(c);
            const double* src = applied.plane(c);
            for (std::size_t p = 0; p < out.plane_size(); ++p) dst[p] += wmap[p] * src[p];
        }
    }
    return out;
}

void trilinear_backward(const Lut3d& lut, const Image& img, const Image& grad_out,
                        std::vector<double>* grad_lattice, Image* grad_img) {
    if (img.channels != 3 || !grad_out.same_shape(Image(img.width, img.height, 3)))
        throw ContractError("trilinear_backward: shape mismatch");
    if (grad_lattice && grad_lattice->size() != lut.lattice.size())
        throw ContractError("trilinear_backward: grad_lattice size mismatch");
    if (grad_img) *grad_img = Image(img.width, img.height, 3);

    const int n = lut.n_bins;
    const std::size_t ps = img.plane_size();
    for (std::size_t p = 0; p < ps; ++p) {
        const CellIndex ci = locate(lut, img.data[p], img.data[ps + p], img.data[2 * ps + p]);
        const double f[3] = {ci.frac[0], ci.frac[1], ci.frac[2]};
        for (int c = 0; c < 3; ++c) {
            const double go = grad_out.data[std::size_t(c) * ps + p];
            if (go == 0.0) continue;
            double d_axis[3] = {0, 0, 0};
            for (int dk = 0; dk < 2; ++dk)
                for (int dj = 0; dj < 2; ++dj)
                    for (int di = 0; di < 2; ++di) {
                        const double wr = di ? f[0] : 1 - f[0];
                        const double wg = dj ? f[1] : 1 - f[1];
                        const double wb = dk ? f[2] : 1 - f[2];
                        const std::size_t entry =
                            ((std::size_t(ci.cell[2] + dk) * n + (ci.cell[1] + dj)) * n +
                             (ci.cell[0] + di)) * 3 + c;
                        if (grad_lattice) (*grad_lattice)[entry] += go * wr * wg * wb;
                        if (grad_img) {
                            const double m = lut.lattice[entry];
                            d_axis[0] += (di ? 1.0 : -1.0) * wg * wb * m;
                            d_axis[1] += (dj ? 1.0 : -1.0) * wr * wb * m;
                            d_axis[2] += (dk ? 1.0 : -1.0) * wr * wg * m;
                        }
                    }
            if (grad_img)
                for (int a = 0; a < 3; ++a)
                    grad_img->data[std::size_t(a) * ps + p] += go * d_axis[a] * (n - 1);
        }
    }
}

double smoothness_reg(const Lut3d& lut) {
    const int n = lut.n_bins;
    double sum = 0;
    for (int c = 0; c < 3; ++c)
        for (int k = 0; k < n; ++k)
            for (int j = 0; j < n; ++j)
                for (int i = 0; i < n; ++i) {
                    const double cur = lut.at(i, j, k, c);
                    if (i + 1 < n) {
                        const double d = lut.at(i + 1, j, k, c) - cur;
                        sum += d * d;
                    }
                    if (j + 1 < n) {
                        const double d = lut.at(i, j + 1, k, c) - cur;
                        sum += d * d;
                    }
                    if (k + 1 < n) {
                        const double d = lut.at(i, j, k + 1, c) - cur;
                        sum += d * d;
                    }
                }
    return sum;
}

double monotonicity_reg(const Lut3d& lut) {
    const int n = lut.n_bins;
    double sum = 0;
    for (int c = 0; c < 3; ++c)
        for (int k = 0; k < n; ++k)
            for (int j = 0; j < n; ++j)
                for (int i = 0; i < n; ++i) {
                    const double cur = lut.at(i, j, k, c);
                    if (i + 1 < n) {
                        const double d = std::max(0.0, cur - lut.at(i + 1, j, k, c));
                        sum += d * d;
                    }
                    if (j + 1 < n) {
                        const double d = std::max(0.0, cur - lut.at(i, j + 1, k, c));
                        sum += d * d;
                    }
                    if (k + 1 < n) {
                        const double d = std::max(0.0, cur - lut.at(i, j, k + 1, c));
                        sum += d * d;
                    }
                }
    return sum;
}

void smoothness_reg_grad(const Lut3d& lut, double scale, std::vector<double>& grad_lattice) {
    if (grad_lattice.size() != lut.lattice.size())
        throw ContractError("smoothness_reg_grad: grad size mismatch");
    const int n = lut.n_bins;
    auto idx = [n](int i, int j, int k, int c) {
        return ((std::size_t(k) * n + j) * n + i) * 3 + c;
    };
    for (int c = 0; c < 3; ++c)
        for (int k = 0; k < n; ++k)
            for (int j = 0; j < n; ++j)
                for (int i = 0; i < n; ++i) {
                    const double cur = lut.at(i, j, k, c);
                    if (i + 1 < n) {
                        const double d = lut.at(i + 1, j, k, c) - cur;
                        grad_lattice[idx(i + 1, j, k, c)] += scale * 2 * d;
                        grad_lattice[idx(i, j, k, c)] -= scale * 2 * d;
                    }
                    if (j + 1 < n) {
                        const double d = lut.at(i, j + 1, k, c) - cur;
                        grad_lattice[idx(i, j + 1, k, c)] += scale * 2 * d;
                        grad_lattice[idx(i, j, k, c)] -= scale * 2 * d;
                    }
                    if (k + 1 < n) {
                        const double d = lut.at(i, j, k + 1, c) - cur;
                        grad_lattice[idx(i, j, k + 1, c)] += scale * 2 * d;
                        grad_lattice[idx(i, j, k, c)] -= scale * 2 * d;
                    }
                }
}

void monotonicity_reg_grad(const Lut3d& lut, double scale, std::vector<double>& grad_lattice) {
    if (grad_lattice.size() != lut.lattice.size())
        throw ContractError("monotonicity_reg_grad: grad size mismatch");
    const int n = lut.n_bins;
    auto idx = [n](int i, int j, int k, int c) {
        return ((std::size_t(k) * n + j) * n + i) * 3 + c;
    };
    for (int c = 0; c < 3; ++c)
        for (int k = 0; k < n; ++k)
            for (int j = 0; j < n; ++j)
                for (int i = 0; i < n; ++i) {
                    const double cur = lut.at(i, j, k, c);
                    auto hinge = [&](int i2, int j2, int k2) {
                        const double d = cur - lut.at(i2, j2, k2, c);
                        if (d > 0) {
                            grad_lattice[idx(i, j, k, c)] += scale * 2 * d;
                            grad_lattice[idx(i2, j2, k2, c)] -= scale * 2 * d;
                        }
                    };
                    if (i + 1 < n) hinge(i + 1, j, k);
                    if (j + 1 < n) hinge(i, j + 1, k);
                    if (k + 1 < n) hinge(i, j, k + 1);
                }
}

Lut3d read_cube(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    Lut3d lut;
    lut.n_bins = 0;
    std::size_t expected = 0, got = 0;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ss(line);
        std::string first;
        if (!(ss >> first) || first[0] == '#') continue;
        if (first == "TITLE" || first == "DOMAIN_MIN" || first == "DOMAIN_MAX") continue;
        if (first == "LUT_3D_SIZE") {
            int n = 0;
            if (!(ss >> n) || n < 2)
                throw FormatError("line " + std::to_string(line_no) + ": bad LUT_3D_SIZE");
            lut.n_bins = n;
            expected = std::size_t(n) * n * n;
            lut.lattice.assign(expected * 3, 0.0);
            continue;
        }
        if (first == "LUT_1D_SIZE")
            throw FormatError("line " + std::to_string(line_no) + ": 1D LUTs are not supported");
        // data row
        if (lut.n_bins == 0)
            throw FormatError("line " + std::to_string(line_no) + ": data before LUT_3D_SIZE");
        if (got >= expected)
            throw FormatError("line " + std::to_string(line_no) + ": more than " +
                              std::to_string(expected) + " data rows");
        double r, g, b;
        std::istringstream row(line);
        if (!(row >> r >> g >> b))
            throw FormatError("line " + std::to_string(line_no) + ": expected three floats");
        lut.lattice[got * 3 + 0] = r;
        lut.lattice[got * 3 + 1] = g;
        lut.lattice[got * 3 + 2] = b;
        ++got;
    }
    if (lut.n_bins == 0) throw FormatError("missing LUT_3D_SIZE header: " + path);
    if (got != expected)
        throw FormatError("expected " + std::to_string(expected) + " data rows (LUT_3D_SIZE^3), got " +
                          std::to_string(got) + ": " + path);
    return lut;
}

void write_cube(const Lut3d& lut, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "LUT_3D_SIZE " << lut.n_bins << "\n";
    char buf[64];
    const std::size_t entries = lut.lattice.size() / 3;
    for (std::size_t e = 0; e < entries; ++e) {
        std::snprintf(buf, sizeof buf, "%.6f %.6f %.6f\n", lut.lattice[e * 3], lut.lattice[e * 3 + 1],
                      lut.lattice[e * 3 + 2]);
        out << buf;
    }
    if (!out) throw IoError("short write: " + path);
}

} // namespace lptm
