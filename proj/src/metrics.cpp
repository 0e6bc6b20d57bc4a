#include "lptm/errors.hpp"
#include "lptm/metrics.hpp"

#include <cmath>
#include <vector>

namespace lptm {

double psnr(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw ContractError("psnr: shape mismatch");
    double mse = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        mse += d * d;
    }
    mse /= double(a.data.size());
    if (mse <= 0.0) return 99.0;
    return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw ContractError("ssim: shape mismatch");
    constexpr int win = 7;
    constexpr double c1 = 0.01 * 0.01; // (K1 * L)^2, L = 1
    constexpr double c2 = 0.03 * 0.03;
    if (a.width < win || a.height < win)
        throw ContractError("ssim: image smaller than the 7x7 window");

    const int np = win * win;
    const double cov_norm = double(np) / (np - 1); // sample (co)variance
    double total = 0;
    for (int c = 0; c < a.channels; ++c) {
        const double* pa = a.plane(c);
        const double* pb = b.plane(c);
        double acc = 0;
        std::size_t count = 0;
        for (int y = 0; y + win <= a.height; ++y)
            for (int x = 0; x + win <= a.width; ++x) {
                double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
                for (int wy = 0; wy < win; ++wy)
                    for (int wx = 0; wx < win; ++wx) {
                        const double va = pa[std::size_t(y + wy) * a.width + (x + wx)];
                        const double vb = pb[std::size_t(y + wy) * a.width + (x + wx)];
                        sx += va;
                        sy += vb;
                        sxx += va * va;
                        syy += vb * vb;
                        sxy += va * vb;
                    }
                const double ux = sx / np, uy = sy / np;
                const double vx = cov_norm * (sxx / np - ux * ux);
                const double vy = cov_norm * (syy / np - uy * uy);
                const double vxy = cov_norm * (sxy / np - ux * uy);
                acc += ((2 * ux * uy + c1) * (2 * vxy + c2)) /
                       ((ux * ux + uy * uy + c1) * (vx + vy + c2));
                ++count;
            }
        total += acc / double(count);
    }
    return total / a.channels;
}

double delta_e(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw ContractError("delta_e: shape mismatch");
    if (a.channels != 3) throw ContractError("delta_e: expected 3-channel images");
    const Image lab_a = rgb_to_lab(a);
    const Image lab_b = rgb_to_lab(b);
    const std::size_t ps = a.plane_size();
    double sum = 0;
    for (std::size_t p = 0; p < ps; ++p) {
        const double dl = lab_a.data[p] - lab_b.data[p];
        const double da = lab_a.data[ps + p] - lab_b.data[ps + p];
        const double db = lab_a.data[2 * ps + p] - lab_b.data[2 * ps + p];
        sum += std::sqrt(dl * dl + da * da + db * db);
    }
    return sum / double(ps);
}

} // namespace lptm
