#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "lptm/errors.hpp"
#include "lptm/lut.hpp"
#include "test_support.hpp"

#include <cmath>
#include <fstream>

using namespace lptm;
using namespace lptm::test;

namespace {

Lut3d random_lut(Rng& rng, int n_bins) {
    Lut3d lut = zero_lut(n_bins);
    for (double& v : lut.lattice) v = rng.uniform();
    return lut;
}

} // namespace

TEST_CASE("identity lattice entries") {
    const Lut3d small = identity_lut(2);
    CHECK(small.at(1, 0, 1, 0) == 1.0);
    CHECK(small.at(1, 0, 1, 1) == 0.0);
    CHECK(small.at(1, 0, 1, 2) == 1.0);

    const Lut3d lut = identity_lut(33);
    CHECK(lut.at(16, 16, 16, 0) == doctest::Approx(0.5));
    CHECK(lut.at(16, 16, 16, 1) == doctest::Approx(0.5));
    CHECK(lut.at(16, 16, 16, 2) == doctest::Approx(0.5));

    CHECK_THROWS_AS(identity_lut(1), ContractError);
}

TEST_CASE("identity LUT application is the identity") {
    Rng rng(2);
    const Lut3d lut = identity_lut(33);
    Image img = random_image(rng, 31, 17, 3);
    img.at(0, 0, 0) = 0.25;
    img.at(0, 0, 1) = 0.5;
    img.at(0, 0, 2) = 0.75;
    img.at(1, 0, 0) = 0.0;
    img.at(1, 0, 1) = 1.0;
    const Image out = trilinear_apply(lut, img);
    CHECK(max_abs_diff(out, img) < 1e-6);
}

TEST_CASE("lattice nodes are reproduced exactly") {
    Rng rng(3);
    const Lut3d lut = random_lut(rng, 5);
    Image img(1, 1, 3);
    img.at(0, 0, 0) = 2.0 / 4.0;
    img.at(0, 0, 1) = 3.0 / 4.0;
    img.at(0, 0, 2) = 1.0 / 4.0;
    const Image out = trilinear_apply(lut, img);
    for (int c = 0; c < 3; ++c)
        CHECK(out.at(0, 0, c) == doctest::Approx(lut.at(2, 3, 1, c)).epsilon(1e-12));
}

TEST_CASE("center of a unit cell blends all eight corners") {
    Lut3d lut = zero_lut(2);
    for (int c = 0; c < 3; ++c) lut.at(1, 1, 1, c) = 1.0;
    Image img(1, 1, 3);
    for (int c = 0; c < 3; ++c) img.at(0, 0, c) = 0.5;
    const Image out = trilinear_apply(lut, img);
    for (int c = 0; c < 3; ++c) CHECK(out.at(0, 0, c) == doctest::Approx(0.125).epsilon(1e-12));
}

TEST_CASE("fuse_apply with one-hot weights selects one LUT") {
    Rng rng(4);
    std::vector<Lut3d> luts = {random_lut(rng, 9), random_lut(rng, 9), random_lut(rng, 9)};
    const Image img = random_image(rng, 12, 10, 3);
    Image weights(12, 10, 3);
    for (std::size_t p = 0; p < weights.plane_size(); ++p) weights.plane(0)[p] = 1.0;
    const Image fused = fuse_apply(luts, weights, img);
    const Image direct = trilinear_apply(luts[0], img);
    CHECK(max_abs_diff(fused, direct) < 1e-12);
}

TEST_CASE("constant weights commute with lattice fusion") {
    // interpolation is linear in the lattice, so fusing lattices first and
    // interpolating once must match interpolate-then-fuse
    Rng rng(5);
    std::vector<Lut3d> luts = {random_lut(rng, 17), random_lut(rng, 17), random_lut(rng, 17)};
    const double wbar[3] = {0.2, 0.5, 0.3};
    const Image img = random_image(rng, 16, 16, 3);

    Image weights(16, 16, 3);
    for (int n = 0; n < 3; ++n)
        for (std::size_t p = 0; p < weights.plane_size(); ++p) weights.plane(n)[p] = wbar[n];
    const Image interp_then_fuse = fuse_apply(luts, weights, img);

    Lut3d fused = zero_lut(17);
    for (int n = 0; n < 3; ++n)
        for (std::size_t i = 0; i < fused.lattice.size(); ++i)
            fused.lattice[i] += wbar[n] * luts[std::size_t(n)].lattice[i];
    const Image fuse_then_interp = trilinear_apply(fused, img);

    CHECK(max_abs_diff(interp_then_fuse, fuse_then_interp) < 1e-5);
}

TEST_CASE("identity LUT pair under convex weights is the identity") {
    Rng rng(6);
    std::vector<Lut3d> luts = {identity_lut(33), identity_lut(33)};
    const Image img = random_image(rng, 9, 9, 3);
    Image weights(9, 9, 2);
    for (std::size_t p = 0; p < weights.plane_size(); ++p) {
        weights.plane(0)[p] = 0.3;
        weights.plane(1)[p] = 0.7;
    }
    const Image out = fuse_apply(luts, weights, img);
    CHECK(max_abs_diff(out, img) < 1e-6);
}

TEST_CASE("fuse_apply validates counts and sizes") {
    Rng rng(7);
    std::vector<Lut3d> luts = {identity_lut(5)};
    const Image img = random_image(rng, 8, 8, 3);
    CHECK_THROWS_AS(fuse_apply(luts, Image(8, 8, 2, 1.0), img), ContractError);
    CHECK_THROWS_AS(fuse_apply(luts, Image(4, 8, 1, 1.0), img), ContractError);
}

TEST_CASE("monotone lattices stay monotone through interpolation") {
    Rng rng(8);
    // random nondecreasing lattice along each channel's own axis
    Lut3d lut = zero_lut(7);
    for (int c = 0; c < 3; ++c)
        for (int k = 0; k < 7; ++k)
            for (int j = 0; j < 7; ++j) {
                double acc = rng.uniform() * 0.05;
                for (int i = 0; i < 7; ++i) {
                    acc += rng.uniform() * 0.15;
                    if (c == 0) lut.at(i, j, k, c) = acc;
                    if (c == 1) lut.at(j, i, k, c) = acc;
                    if (c == 2) lut.at(j, k, i, c) = acc;
                }
            }
    // ramp one channel at a time, holding the other two fixed
    for (int c = 0; c < 3; ++c)
        for (double o1 : {0.1, 0.62})
            for (double o2 : {0.33, 0.9}) {
                Image img(64, 1, 3);
                for (int x = 0; x < 64; ++x) {
                    img.at(x, 0, c) = x / 63.0;
                    img.at(x, 0, (c + 1) % 3) = o1;
                    img.at(x, 0, (c + 2) % 3) = o2;
                }
                const Image out = trilinear_apply(lut, img);
                for (int x = 1; x < 64; ++x)
                    CHECK(out.at(x, 0, c) >= out.at(x - 1, 0, c) - 1e-12);
            }
}

TEST_CASE("trilinear gradients match finite differences") {
    Rng rng(9);
    Lut3d lut = random_lut(rng, 5);
    const Image img = random_image(rng, 8, 8, 3);
    Image grad_out(8, 8, 3);
    for (double& v : grad_out.data) v = rng.uniform(-1.0, 1.0);

    std::vector<double> grad_lattice(lut.lattice.size(), 0.0);
    Image grad_img;
    trilinear_backward(lut, img, grad_out, &grad_lattice, &grad_img);

    auto objective = [&](const Lut3d& l, const Image& im) {
        const Image out = trilinear_apply(l, im);
        double s = 0;
        for (std::size_t i = 0; i < out.data.size(); ++i) s += out.data[i] * grad_out.data[i];
        return s;
    };

    const double eps = 1e-3;
    // lattice entries (sampled)
    for (std::size_t i = 0; i < lut.lattice.size(); i += 37) {
        Lut3d lp = lut, lm = lut;
        lp.lattice[i] += eps;
        lm.lattice[i] -= eps;
        const double fd = (objective(lp, img) - objective(lm, img)) / (2 * eps);
        CHECK(grad_lattice[i] == doctest::Approx(fd).epsilon(1e-3).scale(1.0));
    }
    // image entries (sampled, keeping clear of cell boundaries)
    for (std::size_t i = 0; i < img.data.size(); i += 23) {
        const double s = img.data[i] * 4.0;
        if (std::abs(s - std::round(s)) < 0.01) continue;
        Image ip = img, im = img;
        ip.data[i] += eps;
        im.data[i] -= eps;
        const double fd = (objective(lut, ip) - objective(lut, im)) / (2 * eps);
        CHECK(grad_img.data[i] == doctest::Approx(fd).epsilon(1e-3).scale(1.0));
    }
}

TEST_CASE("zero upstream gradient produces zero gradients") {
    Rng rng(10);
    Lut3d lut = random_lut(rng, 5);
    const Image img = random_image(rng, 4, 4, 3);
    std::vector<double> grad_lattice(lut.lattice.size(), 0.0);
    Image grad_img;
    trilinear_backward(lut, img, Image(4, 4, 3), &grad_lattice, &grad_img);
    for (double v : grad_lattice) CHECK(v == 0.0);
    for (double v : grad_img.data) CHECK(v == 0.0);
}

TEST_CASE("node-aligned pixel puts unit weight on one lattice entry") {
    Lut3d lut = identity_lut(5);
    Image img(1, 1, 3);
    img.at(0, 0, 0) = 0.25;
    img.at(0, 0, 1) = 0.5;
    img.at(0, 0, 2) = 0.75;
    Image grad_out(1, 1, 3);
    grad_out.at(0, 0, 0) = 1.0;
    std::vector<double> grad_lattice(lut.lattice.size(), 0.0);
    trilinear_backward(lut, img, grad_out, &grad_lattice, nullptr);
    double sum = 0;
    for (double v : grad_lattice) sum += std::abs(v);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(lut.at(1, 2, 3, 0) >= 0); // entry (1,2,3) red channel carries it
    const std::size_t idx = ((std::size_t(3) * 5 + 2) * 5 + 1) * 3 + 0;
    CHECK(grad_lattice[idx] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("smoothness regularizer: pins and homogeneity") {
    CHECK(smoothness_reg(zero_lut(9)) == 0.0);
    const double expect = 3.0 * 33.0 * 33.0 / 32.0;
    CHECK(smoothness_reg(identity_lut(33)) == doctest::Approx(expect).epsilon(1e-9));

    Rng rng(11);
    Lut3d lut = random_lut(rng, 6);
    const double base = smoothness_reg(lut);
    for (double& v : lut.lattice) v *= 2.0;
    CHECK(smoothness_reg(lut) == doctest::Approx(4.0 * base).epsilon(1e-9));
}

TEST_CASE("monotonicity regularizer: identity is feasible, reversal is not") {
    const Lut3d ident = identity_lut(33);
    CHECK(monotonicity_reg(ident) == 0.0);

    Lut3d reversed = ident;
    for (double& v : reversed.lattice) v = 1.0 - v;
    CHECK(monotonicity_reg(reversed) > 0.0);

    // single violating pair with gap 0.5 contributes 0.25
    Lut3d lut = zero_lut(2);
    for (int k = 0; k < 2; ++k)
        for (int j = 0; j < 2; ++j)
            for (int i = 0; i < 2; ++i) lut.at(i, j, k, 0) = 0.5;
    lut.at(1, 0, 0, 0) = 0.0; // one decreasing step; the rises back up are free
    CHECK(monotonicity_reg(lut) == doctest::Approx(0.25).epsilon(1e-12));
    lut.at(1, 1, 0, 0) = 0.0;
    lut.at(1, 0, 1, 0) = 0.0;
    lut.at(1, 1, 1, 0) = 0.0; // whole i=1 face lowered: four violations
    CHECK(monotonicity_reg(lut) == doctest::Approx(4 * 0.25).epsilon(1e-12));
}

TEST_CASE("regularizer gradients match finite differences") {
    Rng rng(12);
    Lut3d lut = random_lut(rng, 4);
    std::vector<double> gs(lut.lattice.size(), 0.0), gm(lut.lattice.size(), 0.0);
    smoothness_reg_grad(lut, 1.0, gs);
    monotonicity_reg_grad(lut, 1.0, gm);
    const double eps = 1e-5;
    for (std::size_t i = 0; i < lut.lattice.size(); i += 17) {
        Lut3d lp = lut, lm = lut;
        lp.lattice[i] += eps;
        lm.lattice[i] -= eps;
        CHECK(gs[i] == doctest::Approx((smoothness_reg(lp) - smoothness_reg(lm)) / (2 * eps))
                           .epsilon(1e-4)
                           .scale(1.0));
        CHECK(gm[i] == doctest::Approx((monotonicity_reg(lp) - monotonicity_reg(lm)) / (2 * eps))
                           .epsilon(1e-4)
                           .scale(1.0));
    }
}

TEST_CASE("cube files: write format, round trip, errors") {
    Rng rng(13);
    const std::string dir = scratch_dir("cube");

    write_cube(identity_lut(2), dir + "/id.cube");
    {
        std::ifstream in(dir + "/id.cube");
        std::string l1, l2;
        std::getline(in, l1);
        std::getline(in, l2);
        CHECK(l1 == "LUT_3D_SIZE 2");
        CHECK(l2 == "0.000000 0.000000 0.000000");
        std::size_t rows = 0;
        std::string line;
        while (std::getline(in, line)) ++rows;
        CHECK(rows == 7); // 8 data rows total
    }

    const Lut3d lut = random_lut(rng, 7);
    write_cube(lut, dir + "/r.cube");
    const Lut3d back = read_cube(dir + "/r.cube");
    REQUIRE(back.n_bins == 7);
    double max_err = 0;
    for (std::size_t i = 0; i < lut.lattice.size(); ++i)
        max_err = std::max(max_err, std::abs(lut.lattice[i] - back.lattice[i]));
    CHECK(max_err <= 1e-6);

    {
        std::ofstream out(dir + "/short.cube");
        out << "LUT_3D_SIZE 2\n0 0 0\n1 1 1\n";
    }
    CHECK_THROWS_WITH_AS(read_cube(dir + "/short.cube"),
                         doctest::Contains("8"), FormatError);
    {
        std::ofstream out(dir + "/nohdr.cube");
        out << "0 0 0\n";
    }
    CHECK_THROWS_AS(read_cube(dir + "/nohdr.cube"), FormatError);
}
