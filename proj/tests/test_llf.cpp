#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "lptm/errors.hpp"
#include "lptm/llf.hpp"
#include "lptm/model.hpp"
#include "test_support.hpp"

#include <cmath>

using namespace lptm;
using namespace lptm::test;

namespace {

ParamMaps constant_params(int w, int h, double alpha, double beta) {
    ParamMaps p;
    p.alpha = Image(w, h, 1, alpha);
    p.beta = Image(w, h, 1, beta);
    return p;
}

// PPB whose head emits exactly alpha = a, beta = b everywhere
ConvNet forced_ppb(int in_ch, double a, double b) {
    ConvNet net = make_conv_net({in_ch, 8, 2}, {1, 1});
    net.layers.back().bias[0] = std::log(std::exp(a - 0.01) - 1.0);
    net.layers.back().bias[1] = std::log(std::exp(b) - 1.0);
    return net;
}

} // namespace

TEST_CASE("remap fixed point, identity parameters and hand values") {
    for (double alpha : {0.3, 1.0, 2.5})
        for (double beta : {0.0, 1.0, 1.8})
            CHECK(remap(0.4, 0.4, alpha, beta, 0.1) == doctest::Approx(0.4).epsilon(1e-15));

    for (double i : {0.0, 0.05, 0.4999, 0.75, 1.0}) {
        CHECK(remap(i, 0.5, 1.0, 1.0, 0.1) == doctest::Approx(i).epsilon(1e-12));
        CHECK(remap(i, 0.2, 1.0, 1.0, 0.1) == doctest::Approx(i).epsilon(1e-12));
    }

    CHECK(remap(0.55, 0.5, 0.5, 1.0, 0.1) ==
          doctest::Approx(0.5 + 0.1 * std::sqrt(0.5)).epsilon(1e-9)); // 0.570711
    CHECK(remap(0.8, 0.5, 1.0, 0.5, 0.1) == doctest::Approx(0.7).epsilon(1e-9));
}

TEST_CASE("remap is continuous at the branch boundary") {
    Rng rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        const double g = rng.uniform();
        const double alpha = rng.uniform(0.2, 3.0);
        const double beta = rng.uniform(0.0, 2.0);
        const double sr = 0.1;
        for (double sgn : {-1.0, 1.0}) {
            const double at_boundary = remap(g + sgn * sr, g, alpha, beta, sr);
            CHECK(at_boundary == doctest::Approx(g + sgn * sr).epsilon(1e-12));
        }
    }
}

TEST_CASE("remap is odd around g") {
    Rng rng(2);
    for (int trial = 0; trial < 100; ++trial) {
        const double g = rng.uniform();
        const double d = rng.uniform(0.0, 0.5);
        const double alpha = rng.uniform(0.2, 3.0);
        const double beta = rng.uniform(0.0, 2.0);
        const double up = remap(g + d, g, alpha, beta, 0.1) - g;
        const double down = remap(g - d, g, alpha, beta, 0.1) - g;
        CHECK(up == doctest::Approx(-down).epsilon(1e-10).scale(1.0));
    }
}

TEST_CASE("remap is monotone in i for valid parameters") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const double g = rng.uniform();
        const double alpha = rng.uniform(0.05, 3.0);
        const double beta = rng.uniform(0.0, 2.5);
        double prev = remap(0.0, g, alpha, beta, 0.1);
        for (int s = 1; s <= 400; ++s) {
            const double cur = remap(s / 400.0, g, alpha, beta, 0.1);
            CHECK(cur >= prev - 1e-12);
            prev = cur;
        }
    }
}

TEST_CASE("beta below one compresses, above one expands") {
    Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        const double g = rng.uniform();
        const double d = rng.uniform(0.11, 0.9);
        for (double sgn : {-1.0, 1.0}) {
            const double i = g + sgn * d;
            CHECK(std::abs(remap(i, g, 1.0, 0.5, 0.1) - g) <= d + 1e-12);
            CHECK(std::abs(remap(i, g, 1.0, 1.7, 0.1) - g) >= d - 1e-12);
        }
    }
}

TEST_CASE("printed branch variant thresholds on the raw value") {
    // i <= sigma_r picks the detail branch even far from g
    const double v1 = remap(0.05, 0.9, 2.0, 1.0, 0.1, RemapBranch::Value);
    const double expect = 0.9 - 0.1 * std::pow(0.85 / 0.1, 2.0);
    CHECK(v1 == doctest::Approx(expect).epsilon(1e-12));
    // i > sigma_r picks the edge branch even when |i-g| is small
    const double v2 = remap(0.52, 0.5, 2.0, 1.0, 0.1, RemapBranch::Value);
    CHECK(v2 == doctest::Approx(0.5 + 1.0 * (0.02 - 0.1) + 0.1).epsilon(1e-12));
}

TEST_CASE("remap_grad: fixed point, edge branch value, finite differences") {
    double da, db;
    remap_grad(0.5, 0.5, 1.3, 0.7, 0.1, da, db);
    CHECK(da == 0.0);
    CHECK(db == 0.0);

    remap_grad(0.8, 0.5, 1.0, 0.5, 0.1, da, db);
    CHECK(da == 0.0);
    CHECK(db == doctest::Approx(0.2).epsilon(1e-12));

    Rng rng(5);
    const double eps = 1e-5;
    for (int trial = 0; trial < 200; ++trial) {
        const double g = rng.uniform();
        const double i = rng.uniform();
        if (std::abs(std::abs(i - g) - 0.1) < 1e-3) continue; // keep clear of the branch point
        const double alpha = rng.uniform(0.2, 2.5);
        const double beta = rng.uniform(0.0, 2.0);
        remap_grad(i, g, alpha, beta, 0.1, da, db);
        const double fa =
            (remap(i, g, alpha + eps, beta, 0.1) - remap(i, g, alpha - eps, beta, 0.1)) / (2 * eps);
        const double fb =
            (remap(i, g, alpha, beta + eps, 0.1) - remap(i, g, alpha, beta - eps, 0.1)) / (2 * eps);
        CHECK(da == doctest::Approx(fa).epsilon(1e-4).scale(1.0));
        CHECK(db == doctest::Approx(fb).epsilon(1e-4).scale(1.0));
    }
}

TEST_CASE("identity parameters make fast refinement the identity") {
    Rng rng(6);
    const Image g0 = smooth_image(rng, 33, 26, 3);
    LaplacianPyramid lap;
    GaussianPyramid gauss;
    decompose_depth(g0, 1, lap, gauss);

    RemapConfig cfg;
    cfg.k_samples = 8;
    const Image refined = refine_level_fast(gauss.levels[0], lap.bands[0],
                                            constant_params(33, 26, 1.0, 1.0), cfg);
    CHECK(max_abs_diff(refined, lap.bands[0]) < 1e-5);
}

TEST_CASE("constant level refines to zero") {
    RemapConfig cfg;
    const Image g = constant_image(16, 16, 3, 0.4);
    const Image band = constant_image(16, 16, 3, 0.0);
    for (auto [a, b] : {std::pair{1.0, 1.0}, std::pair{0.5, 1.5}}) {
        const Image refined = refine_level_fast(g, band, constant_params(16, 16, a, b), cfg);
        CHECK(max_abs(refined) < 1e-12);
        const Image direct = refine_level_direct(g, band, constant_params(16, 16, a, b), cfg);
        CHECK(max_abs(direct) < 1e-12);
    }
}

TEST_CASE("direct oracle equals the band for identity parameters") {
    Rng rng(7);
    const Image img = smooth_image(rng, 24, 20, 3);
    LaplacianPyramid lap;
    GaussianPyramid gauss;
    decompose_depth(img, 1, lap, gauss);
    RemapConfig cfg;
    const Image direct = refine_level_direct(gauss.levels[0], lap.bands[0],
                                             constant_params(24, 20, 1.0, 1.0), cfg);
    CHECK(max_abs_diff(direct, lap.bands[0]) < 1e-5);
}

TEST_CASE("fast refinement converges to the direct oracle in K") {
    Rng rng(8);
    const Image img = smooth_image(rng, 32, 32, 3);
    LaplacianPyramid lap;
    GaussianPyramid gauss;
    decompose_depth(img, 1, lap, gauss);
    const ParamMaps params = constant_params(32, 32, 0.5, 1.0);

    RemapConfig cfg;
    const Image direct = refine_level_direct(gauss.levels[0], lap.bands[0], params, cfg);

    cfg.k_samples = 8;
    const Image fast8 = refine_level_fast(gauss.levels[0], lap.bands[0], params, cfg);
    cfg.k_samples = 32;
    const Image fast32 = refine_level_fast(gauss.levels[0], lap.bands[0], params, cfg);

    const double dev8 = mean_abs_diff(fast8, direct);
    const double dev32 = mean_abs_diff(fast32, direct);
    CHECK(dev32 <= 1e-2);
    CHECK(dev32 <= dev8);
}

TEST_CASE("fast refinement gradients match finite differences") {
    Rng rng(9);
    const Image img = smooth_image(rng, 12, 10, 3);
    LaplacianPyramid lap;
    GaussianPyramid gauss;
    decompose_depth(img, 1, lap, gauss);
    RemapConfig cfg;
    cfg.k_samples = 5;

    ParamMaps params;
    params.alpha = Image(12, 10, 1);
    params.beta = Image(12, 10, 1);
    for (double& v : params.alpha.data) v = rng.uniform(0.4, 1.8);
    for (double& v : params.beta.data) v = rng.uniform(0.1, 1.9);

    Image grad_out(12, 10, 3);
    for (double& v : grad_out.data) v = rng.uniform(-1.0, 1.0);

    Image ga, gb;
    refine_level_fast_backward(gauss.levels[0], params, cfg, grad_out, ga, gb);

    auto objective = [&](const ParamMaps& p) {
        const Image out = refine_level_fast(gauss.levels[0], lap.bands[0], p, cfg);
        double s = 0;
        for (std::size_t i = 0; i < out.data.size(); ++i) s += out.data[i] * grad_out.data[i];
        return s;
    };
    const double eps = 1e-4;
    for (std::size_t i = 0; i < params.alpha.data.size(); i += 7) {
        ParamMaps p = params;
        p.alpha.data[i] += eps;
        const double up = objective(p);
        p.alpha.data[i] -= 2 * eps;
        const double down = objective(p);
        CHECK(ga.data[i] == doctest::Approx((up - down) / (2 * eps)).epsilon(2e-3).scale(1.0));
    }
    for (std::size_t i = 3; i < params.beta.data.size(); i += 7) {
        ParamMaps p = params;
        p.beta.data[i] += eps;
        const double up = objective(p);
        p.beta.data[i] -= 2 * eps;
        const double down = objective(p);
        CHECK(gb.data[i] == doctest::Approx((up - down) / (2 * eps)).epsilon(2e-3).scale(1.0));
    }
}

TEST_CASE("refine_pyramid with forced identity blocks returns the bands") {
    Rng rng(10);
    const Image img = smooth_image(rng, 64, 48, 3);
    LaplacianPyramid lap;
    GaussianPyramid gauss;
    decompose_depth(img, 2, lap, gauss);

    std::vector<ConvNet> ppbs = {forced_ppb(7, 1.0, 1.0), forced_ppb(6, 1.0, 1.0)};
    EdgeMap edge(lap.low.width, lap.low.height);
    RemapConfig cfg;
    cfg.k_samples = 8;
    const auto refined = refine_pyramid(lap, gauss, ppbs, lap.low, edge, cfg);
    REQUIRE(refined.size() == 2);
    for (std::size_t k = 0; k < refined.size(); ++k)
        CHECK(max_abs_diff(refined[k], lap.bands[k]) < 1e-5);
}

TEST_CASE("single-level pyramid drives one 7-channel block") {
    Rng rng(11);
    const Image img = smooth_image(rng, 40, 40, 3);
    LaplacianPyramid lap;
    GaussianPyramid gauss;
    decompose_depth(img, 1, lap, gauss);
    std::vector<ConvNet> ppbs = {forced_ppb(7, 1.0, 1.0)};
    EdgeMap edge(lap.low.width, lap.low.height);
    RemapConfig cfg;
    cfg.k_samples = 6;
    RefineTrace trace;
    const auto refined = refine_pyramid(lap, gauss, ppbs, lap.low, edge, cfg, &trace);
    REQUIRE(refined.size() == 1);
    CHECK(trace.levels[0].ppb_input.channels == 7);
    CHECK(max_abs_diff(refined[0], lap.bands[0]) < 1e-5);
}

TEST_CASE("deep pyramids share the finest trained block") {
    CHECK(ppb_index_for_level(3, 4, 3) == 0); // coarsest
    CHECK(ppb_index_for_level(2, 4, 3) == 1);
    CHECK(ppb_index_for_level(1, 4, 3) == 2);
    CHECK(ppb_index_for_level(0, 4, 3) == 2); // beyond trained depth
    CHECK(ppb_index_for_level(1, 2, 3) == 0);
    CHECK(ppb_index_for_level(0, 2, 3) == 1);
    // a depth-1 model has nothing compatible to share with finer levels
    CHECK(ppb_index_for_level(2, 3, 1) == 0);
    CHECK(ppb_index_for_level(1, 3, 1) == -1);
    CHECK(ppb_index_for_level(0, 3, 1) == -1);
}

TEST_CASE("deeper pyramids than the trained depth pass finer bands through") {
    Rng rng(14);
    const Image img = smooth_image(rng, 64, 64, 3);
    LaplacianPyramid lap;
    GaussianPyramid gauss;
    decompose_depth(img, 2, lap, gauss);
    std::vector<ConvNet> ppbs = {forced_ppb(7, 0.7, 1.2)}; // depth-1 model, non-identity
    EdgeMap edge(lap.low.width, lap.low.height);
    RemapConfig cfg;
    cfg.k_samples = 6;
    const auto refined = refine_pyramid(lap, gauss, ppbs, lap.low, edge, cfg);
    REQUIRE(refined.size() == 2);
    CHECK(max_abs_diff(refined[0], lap.bands[0]) == 0.0); // untouched
    CHECK(max_abs_diff(refined[1], lap.bands[1]) > 0.0);  // refined by the block
}

TEST_CASE("refine_pyramid validates ladders and sizes") {
    Rng rng(12);
    const Image img = smooth_image(rng, 32, 32, 3);
    LaplacianPyramid lap;
    GaussianPyramid gauss;
    decompose_depth(img, 1, lap, gauss);
    std::vector<ConvNet> ppbs = {forced_ppb(7, 1.0, 1.0)};
    EdgeMap bad_edge(3, 3);
    RemapConfig cfg;
    CHECK_THROWS_AS(refine_pyramid(lap, gauss, ppbs, lap.low, bad_edge, cfg), ContractError);

    GaussianPyramid broken = gauss;
    broken.levels.pop_back();
    EdgeMap edge(lap.low.width, lap.low.height);
    CHECK_THROWS_AS(refine_pyramid(lap, broken, ppbs, lap.low, edge, cfg), ContractError);
}

TEST_CASE("predict_params enforces channel counts and positivity") {
    Rng rng(13);
    ConvNet ppb = make_conv_net({7, 8, 2}, {1, 1});
    kaiming_init(ppb, rng);
    const Image bad = random_image(rng, 8, 8, 6);
    CHECK_THROWS_AS(predict_params(ppb, bad), ContractError);

    const Image in = random_image(rng, 8, 8, 7);
    const ParamMaps maps = predict_params(ppb, in);
    CHECK(maps.alpha.width == 8);
    CHECK(maps.alpha.height == 8);
    for (double v : maps.alpha.data) CHECK(v > 0.0);
    for (double v : maps.beta.data) CHECK(v >= 0.0);
}
