#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "mangacolor/error.hpp"
#include "mangacolor/nn/adam.hpp"
#include "mangacolor/nn/checkpoint.hpp"
#include "mangacolor/nn/layers.hpp"
#include "mangacolor/nn/ops.hpp"
#include "support.hpp"

using namespace mangacolor;
using namespace mangacolor::nn;

namespace {

Tensor randn(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> n(0.0, scale);
    for (float& v : t.data()) v = static_cast<float>(n(rng));
    return t;
}

std::size_t at4(const Shape& s, int n, int c, int y, int x) {
    return ((static_cast<std::size_t>(n) * s[1] + c) * s[2] + y) * s[3] + x;
}

}  // namespace

TEST_CASE("conv2d equals the six-loop reference") {
    std::mt19937_64 rng(1);
    struct Case {
        int n, c, o, h, w, k, stride, pad;
    };
    for (const Case g : {Case{2, 3, 4, 7, 6, 3, 1, 1}, Case{1, 2, 3, 8, 8, 4, 2, 1}, Case{2, 5, 2, 5, 4, 1, 1, 0},
                         Case{1, 3, 2, 9, 7, 3, 2, 1}}) {
        const Tensor x = randn({g.n, g.c, g.h, g.w}, rng);
        const Tensor w = randn({g.o, g.c, g.k, g.k}, rng);
        const Tensor b = randn({g.o}, rng);
        const Tensor y = conv2d(x, w, b, g.stride, g.pad);
        const int ho = (g.h + 2 * g.pad - g.k) / g.stride + 1, wo = (g.w + 2 * g.pad - g.k) / g.stride + 1;
        REQUIRE(y.shape() == Shape{g.n, g.o, ho, wo});
        double worst = 0.0;
        for (int n = 0; n < g.n; ++n) {
            for (int o = 0; o < g.o; ++o) {
                for (int oy = 0; oy < ho; ++oy) {
                    for (int ox = 0; ox < wo; ++ox) {
                        double acc = b[o];
                        for (int c = 0; c < g.c; ++c) {
                            for (int ky = 0; ky < g.k; ++ky) {
                                for (int kx = 0; kx < g.k; ++kx) {
                                    const int iy = oy * g.stride - g.pad + ky, ix = ox * g.stride - g.pad + kx;
                                    if (iy < 0 || ix < 0 || iy >= g.h || ix >= g.w) continue;
                                    acc += static_cast<double>(x[at4(x.shape(), n, c, iy, ix)]) *
                                           w[at4(w.shape(), o, c, ky, kx)];
                                }
                            }
                        }
                        worst = std::max(worst, std::abs(acc - y[at4(y.shape(), n, o, oy, ox)]));
                    }
                }
            }
        }
        CHECK(worst <= 1e-5);
    }
    CHECK_THROWS_AS(conv2d(Tensor({1, 2, 4, 4}), Tensor({3, 3, 3, 3}), Tensor({3}), 1, 1), ShapeError);
}

TEST_CASE("batch norm") {
    std::mt19937_64 rng(2);
    const Tensor x = randn({4, 3, 5, 5}, rng, 3.0);
    Tensor gamma({3}, 1.0f), beta({3}, 0.0f), mean({3}, 0.0f), var({3}, 1.0f);
    BatchNormCache cache;
    const Tensor y = batch_norm_train(x, gamma, beta, mean, var, &cache);
    const int per = 4 * 25;
    for (int c = 0; c < 3; ++c) {
        double s = 0, s2 = 0, xs = 0, xs2 = 0;
        for (int n = 0; n < 4; ++n) {
            for (int i = 0; i < 25; ++i) {
                const double v = y[at4(y.shape(), n, c, i / 5, i % 5)];
                const double u = x[at4(x.shape(), n, c, i / 5, i % 5)];
                s += v;
                s2 += v * v;
                xs += u;
                xs2 += u * u;
            }
        }
        CHECK(std::abs(s / per) <= 1e-4);
        CHECK(std::abs(s2 / per - 1.0) <= 1e-3);
        const double bmean = xs / per, bvar = (xs2 - per * bmean * bmean) / (per - 1);
        CHECK(mean[c] == doctest::Approx(0.1 * bmean).epsilon(1e-5));
        CHECK(var[c] == doctest::Approx(0.9 + 0.1 * bvar).epsilon(1e-5));
    }

    Tensor g2 = randn({3}, rng), b2 = randn({3}, rng), m2 = randn({3}, rng), v2({3}, 2.0f);
    const Tensor e = batch_norm_eval(x, g2, b2, m2, v2, nullptr);
    for (std::size_t i = 0; i < x.size(); i += 7) {
        const int c = static_cast<int>(i / 25 % 3);
        const double want = (x[i] - m2[c]) / std::sqrt(2.0 + kBatchNormEps) * g2[c] + b2[c];
        CHECK(e[i] == doctest::Approx(want).epsilon(1e-5));
    }
}

TEST_CASE("pointwise and structural ops") {
    std::mt19937_64 rng(3);
    const Tensor x = randn({2, 3, 4, 5}, rng);

    const Tensor r = relu(x);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(r[i] == std::max(0.0f, x[i]));
    const Tensor s = sigmoid(x);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(s[i] == doctest::Approx(1.0 / (1.0 + std::exp(-x[i]))).epsilon(1e-6));

    const Tensor up = upsample2x_nearest(x);
    REQUIRE(up.shape() == Shape{2, 3, 8, 10});
    for (int y = 0; y < 8; ++y) {
        for (int xx = 0; xx < 10; ++xx) CHECK(up[at4(up.shape(), 1, 2, y, xx)] == x[at4(x.shape(), 1, 2, y / 2, xx / 2)]);
    }

    const Tensor bl = upsample2x_bilinear(x);
    REQUIRE(bl.shape() == Shape{2, 3, 8, 10});
    for (int y = 0; y < 8; ++y) {
        for (int xx = 0; xx < 10; ++xx) {
            const double sy = (y + 0.5) / 2 - 0.5, sx = (xx + 0.5) / 2 - 0.5;
            const int y0 = static_cast<int>(std::floor(sy)), x0 = static_cast<int>(std::floor(sx));
            const double fy = sy - y0, fx = sx - x0;
            auto src = [&](int yy, int xs) {
                return static_cast<double>(x[at4(x.shape(), 0, 1, std::clamp(yy, 0, 3), std::clamp(xs, 0, 4))]);
            };
            const double want = (1 - fy) * ((1 - fx) * src(y0, x0) + fx * src(y0, x0 + 1)) +
                                fy * ((1 - fx) * src(y0 + 1, x0) + fx * src(y0 + 1, x0 + 1));
            CHECK(bl[at4(bl.shape(), 0, 1, y, xx)] == doctest::Approx(want).epsilon(1e-6));
        }
    }

    const Tensor in = randn({3, 7}, rng), w = randn({4, 7}, rng), b = randn({4}, rng);
    const Tensor fc = fully_connected(in, w, b);
    REQUIRE(fc.shape() == Shape{3, 4});
    for (int n = 0; n < 3; ++n) {
        for (int o = 0; o < 4; ++o) {
            double acc = b[o];
            for (int i = 0; i < 7; ++i) acc += static_cast<double>(in[n * 7 + i]) * w[o * 7 + i];
            CHECK(fc[n * 4 + o] == doctest::Approx(acc).epsilon(1e-5));
        }
    }

    const Tensor a({1, 256, 28, 28}), c({1, 256, 28, 28}), d({1, 256, 28, 28});
    CHECK(concat_channels({&a, &c, &d}).shape() == Shape{1, 768, 28, 28});
    const Tensor v = randn({2, 3}, rng);
    const Tensor bc = broadcast_spatial(v, 2, 3);
    CHECK(bc.shape() == Shape{2, 3, 2, 3});
    CHECK(bc[at4(bc.shape(), 1, 2, 1, 2)] == v[5]);
    const Tensor gp = global_avg_pool(x);
    CHECK(gp.shape() == Shape{2, 3});
    double mean = 0;
    for (int i = 0; i < 20; ++i) mean += x[at4(x.shape(), 1, 0, i / 5, i % 5)];
    CHECK(gp[3] == doctest::Approx(mean / 20).epsilon(1e-6));
}

TEST_CASE("relu activation probe") {
    const Tensor a({4}, std::vector<float>{-1, 2, -3, 4});
    const Tensor b({4}, std::vector<float>{-1, 5, -3, 9});
    const Tensor c({4}, std::vector<float>{1, 2, -3, 4});
    ActivationPatternProbe probe;
    relu(a);
    const auto ha = probe.hash();
    probe.reset();
    relu(b);
    CHECK(probe.hash() == ha);
    probe.reset();
    relu(c);
    CHECK(probe.hash() != ha);
}

TEST_CASE("losses") {
    const Tensor p({2, 2}, std::vector<float>{1, 2, 3, 4});
    const Tensor t({2, 2}, std::vector<float>{1, 0, 3, 8});
    Tensor g;
    CHECK(mse_loss(p, t, &g) == doctest::Approx((4.0 + 16.0) / 4));
    CHECK(g[1] == doctest::Approx(2.0 * 2 / 4));

    Tensor real({3}, 20.0f), fake({3}, -20.0f);
    CHECK(sigmoid_cross_entropy(real, 1.0f, nullptr) < 1e-6);
    CHECK(sigmoid_cross_entropy(fake, 0.0f, nullptr) < 1e-6);
    CHECK(sigmoid_cross_entropy(Tensor({1}, 0.0f), 1.0f, nullptr) == doctest::Approx(std::log(2.0)));

    const Tensor z({2, 3}, std::vector<float>{1, 2, 3, 0, 0, 0});
    const std::vector<int> labels{2, 1};
    const double l0 = -(3 - std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0)));
    const double l1 = std::log(3.0);
    CHECK(softmax_cross_entropy(z, labels, nullptr) == doctest::Approx((l0 + l1) / 2));
    CHECK_THROWS_AS(softmax_cross_entropy(z, std::vector<int>{3, 0}, nullptr), InvalidArgument);
}

TEST_CASE("Adam") {
    SUBCASE("first step moves by alpha") {
        ParamSet ps;
        Tensor& theta = ps.add("theta", {1});
        theta.grad()[0] = 1.0f;
        Adam adam;
        adam.step(ps);
        CHECK(theta[0] == doctest::Approx(-1e-4).epsilon(1e-6));
    }
    SUBCASE("matches a scalar reference") {
        ParamSet ps;
        Tensor& theta = ps.add("theta", {3}, true, 0.5f);
        AdamConfig cfg;
        Adam adam(cfg);
        const double g[3] = {0.3, -2.0, 1e-3};
        double ref[3], m[3] = {}, v[3] = {};
        for (int i = 0; i < 3; ++i) ref[i] = 0.5;
        for (int step = 1; step <= 2; ++step) {
            for (int i = 0; i < 3; ++i) theta.grad()[i] = static_cast<float>(g[i]);
            const std::vector<float> before(theta.data().begin(), theta.data().end());
            adam.step(ps);
            for (int i = 0; i < 3; ++i) {
                const double gi = static_cast<float>(g[i]);
                m[i] = cfg.beta1 * m[i] + (1 - cfg.beta1) * gi;
                v[i] = cfg.beta2 * v[i] + (1 - cfg.beta2) * gi * gi;
                const double mh = m[i] / (1 - std::pow(cfg.beta1, step)), vh = v[i] / (1 - std::pow(cfg.beta2, step));
                ref[i] -= cfg.alpha * mh / (std::sqrt(vh) + cfg.eps);
                // The parameter is float32; compare against the reference
                // with the same per-step rounding applied.
                ref[i] = static_cast<float>(ref[i]);
                CHECK(std::abs(theta[i] - ref[i]) <= 1e-10);
                CHECK(std::abs(theta[i] - before[i]) <= 2 * cfg.alpha);
            }
        }
    }
    SUBCASE("non-finite gradients are rejected") {
        ParamSet ps;
        Tensor& a = ps.add("a", {2}, true, 1.0f);
        a.grad()[1] = std::numeric_limits<float>::quiet_NaN();
        Adam adam;
        CHECK_THROWS_AS(adam.step(ps), InvalidArgument);
        CHECK(a[0] == 1.0f);
        CHECK(a[1] == 1.0f);
    }
    SUBCASE("frozen entries are left alone") {
        ParamSet ps;
        Tensor& f = ps.add("stat", {1}, false, 3.0f);
        f.grad()[0] = 5.0f;
        Adam adam;
        adam.step(ps);
        CHECK(f[0] == 3.0f);
    }
}

TEST_CASE("checkpoint round trip is bitwise") {
    std::mt19937_64 rng(4);
    ParamSet a;
    a.add("conv.weight", {4, 3, 3, 3});
    a.add("bn.running_var", {4}, false);
    for (auto& [name, e] : a.entries()) {
        for (float& v : e.tensor.data()) v = static_cast<float>(std::normal_distribution<double>(0, 1)(rng));
    }
    a.at("bn.running_var")[0] = -0.0f;
    a.at("bn.running_var")[1] = std::numeric_limits<float>::denorm_min();
    const auto dir = testsupport::temp_dir("ckpt");
    save_checkpoint(dir, a, {{"kind", "test"}, {"n", 3}});
    CHECK(read_checkpoint_meta(dir)["kind"] == "test");

    ParamSet b;
    b.add("conv.weight", {4, 3, 3, 3});
    b.add("bn.running_var", {4}, false);
    CHECK(load_checkpoint(dir, b)["n"] == 3);
    for (const auto& [name, e] : a.entries()) CHECK(e.tensor.same_as(b.at(name)));
    CHECK(std::signbit(b.at("bn.running_var")[0]));
    CHECK(a.checksum() == b.checksum());

    ParamSet wrong_shape;
    wrong_shape.add("conv.weight", {4, 3, 3, 2});
    wrong_shape.add("bn.running_var", {4}, false);
    CHECK_THROWS_AS(load_checkpoint(dir, wrong_shape), Error);
    ParamSet missing;
    missing.add("conv.weight", {4, 3, 3, 3});
    CHECK_THROWS_AS(load_checkpoint(dir, missing), Error);
    CHECK_THROWS_AS(load_checkpoint(dir / "nope", b), IoError);
}

TEST_CASE("ParamSet") {
    ParamSet ps;
    ps.add("w", {2, 3}, true, 1.5f);
    CHECK(ps.scalar_count() == 6);
    CHECK_THROWS_AS(ps.add("w", {1}), InvalidArgument);
    CHECK_THROWS_AS(ps.at("missing"), InvalidArgument);
    const auto before = ps.checksum();
    ps.at("w")[4] = 2.0f;
    CHECK(ps.checksum() != before);
    CHECK_THROWS_AS(Tensor({2, 2}, std::vector<float>{1, 2, 3}), ShapeError);
}
