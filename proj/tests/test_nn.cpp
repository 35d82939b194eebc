#include <catch_amalgamated.hpp>

#include <cmath>

#include "support/op_gradchecks.hpp"

using gcv::i64;
using gcv::Shape;
using gcv::Tensor;

namespace {

constexpr double kOpTol = 1e-6;

// Direct convolution, written independently of the im2col path.
Tensor<double> conv_reference(const Tensor<double>& x, const Tensor<double>& w,
                              const Tensor<double>& b, i64 stride, i64 pad, i64 groups) {
    const i64 B = x.shape[0], Cin = x.shape[1], H = x.shape[2], W = x.shape[3];
    const i64 Cout = w.shape[0], kh = w.shape[2], kw = w.shape[3];
    const i64 Ho = (H + 2 * pad - kh) / stride + 1;
    const i64 Wo = (W + 2 * pad - kw) / stride + 1;
    const i64 cpg = Cin / groups, opg = Cout / groups;
    Tensor<double> y = Tensor<double>::zeros({B, Cout, Ho, Wo});
    for (i64 bi = 0; bi < B; ++bi)
        for (i64 co = 0; co < Cout; ++co) {
            const i64 g = co / opg;
            for (i64 oh = 0; oh < Ho; ++oh)
                for (i64 ow = 0; ow < Wo; ++ow) {
                    double acc = b.store ? b.ptr()[co] : 0.0;
                    for (i64 ci = 0; ci < cpg; ++ci)
                        for (i64 i = 0; i < kh; ++i)
                            for (i64 j = 0; j < kw; ++j) {
                                const i64 ih = oh * stride - pad + i;
                                const i64 iw = ow * stride - pad + j;
                                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                                acc += x.ptr()[((bi * Cin + g * cpg + ci) * H + ih) * W + iw] *
                                       w.ptr()[((co * cpg + ci) * kh + i) * kw + j];
                            }
                    y.ptr()[((bi * Cout + co) * Ho + oh) * Wo + ow] = acc;
                }
        }
    return y;
}

// Transposed convolution by explicit scatter, the textbook definition.
Tensor<double> convt_reference(const Tensor<double>& x, const Tensor<double>& w,
                               const Tensor<double>& b, i64 stride) {
    const i64 B = x.shape[0], Cin = x.shape[1], H = x.shape[2], W = x.shape[3];
    const i64 Cout = w.shape[1], kh = w.shape[2], kw = w.shape[3];
    const i64 Ho = (H - 1) * stride + kh;
    const i64 Wo = (W - 1) * stride + kw;
    Tensor<double> y = Tensor<double>::zeros({B, Cout, Ho, Wo});
    for (i64 bi = 0; bi < B; ++bi) {
        for (i64 co = 0; co < Cout; ++co)
            for (i64 i = 0; i < Ho * Wo; ++i)
                y.ptr()[(bi * Cout + co) * Ho * Wo + i] = b.store ? b.ptr()[co] : 0.0;
        for (i64 ci = 0; ci < Cin; ++ci)
            for (i64 h = 0; h < H; ++h)
                for (i64 wi = 0; wi < W; ++wi) {
                    const double v = x.ptr()[((bi * Cin + ci) * H + h) * W + wi];
                    for (i64 co = 0; co < Cout; ++co)
                        for (i64 i = 0; i < kh; ++i)
                            for (i64 j = 0; j < kw; ++j)
                                y.ptr()[((bi * Cout + co) * Ho + h * stride + i) * Wo +
                                        wi * stride + j] +=
                                    v * w.ptr()[((ci * Cout + co) * kh + i) * kw + j];
                }
    }
    return y;
}

bool tensors_close(const Tensor<double>& a, const Tensor<double>& b, double tol = 1e-12) {
    if (a.shape != b.shape) return false;
    for (i64 i = 0; i < a.numel(); ++i)
        if (std::abs(a.ptr()[i] - b.ptr()[i]) > tol) return false;
    return true;
}

bool is_nn_check(const std::string& name) {
    for (const char* p : {"conv", "maxpool", "resize", "batchnorm", "layernorm"})
        if (name.rfind(p, 0) == 0) return true;
    return false;
}

}  // namespace

TEST_CASE("conv2d matches direct convolution") {
    gcv::Rng rng = gcv::make_rng(21, 0);

    SECTION("stride 1, pad 1") {
        auto x = Tensor<double>::zeros({2, 3, 6, 6});
        auto w = Tensor<double>::zeros({4, 3, 3, 3});
        auto b = Tensor<double>::zeros({4});
        gcvtest::fill_uniform(x, -1, 1, rng);
        gcvtest::fill_uniform(w, -1, 1, rng);
        gcvtest::fill_uniform(b, -1, 1, rng);
        REQUIRE(tensors_close(gcv::conv2d(x, w, b, 1, 1), conv_reference(x, w, b, 1, 1, 1)));
    }
    SECTION("stride 2, no pad, no bias") {
        auto x = Tensor<double>::zeros({1, 2, 7, 9});
        auto w = Tensor<double>::zeros({3, 2, 3, 3});
        gcvtest::fill_uniform(x, -1, 1, rng);
        gcvtest::fill_uniform(w, -1, 1, rng);
        REQUIRE(tensors_close(gcv::conv2d(x, w, 2, 0), conv_reference(x, w, {}, 2, 0, 1)));
    }
    SECTION("grouped and depthwise") {
        auto x = Tensor<double>::zeros({2, 6, 5, 5});
        auto w = Tensor<double>::zeros({6, 3, 3, 3});
        auto b = Tensor<double>::zeros({6});
        gcvtest::fill_uniform(x, -1, 1, rng);
        gcvtest::fill_uniform(w, -1, 1, rng);
        gcvtest::fill_uniform(b, -1, 1, rng);
        REQUIRE(tensors_close(gcv::conv2d(x, w, b, 1, 1, 2), conv_reference(x, w, b, 1, 1, 2)));

        auto wd = Tensor<double>::zeros({6, 1, 3, 3});
        gcvtest::fill_uniform(wd, -1, 1, rng);
        REQUIRE(
            tensors_close(gcv::conv2d(x, wd, b, 1, 1, 6), conv_reference(x, wd, b, 1, 1, 6)));
    }
    SECTION("shape errors name both operands") {
        auto x = Tensor<double>::zeros({1, 3, 8, 8});
        auto w = Tensor<double>::zeros({4, 2, 3, 3});
        try {
            gcv::conv2d(x, w, 1, 1);
            FAIL("expected a shape error");
        } catch (const gcv::ShapeError& e) {
            const std::string msg = e.what();
            REQUIRE(msg.find("[4x2x3x3]") != std::string::npos);
            REQUIRE(msg.find("[1x3x8x8]") != std::string::npos);
        }
    }
    SECTION("empty output is an error") {
        auto x = Tensor<double>::zeros({1, 3, 2, 2});
        auto w = Tensor<double>::zeros({4, 3, 5, 5});
        REQUIRE_THROWS_AS(gcv::conv2d(x, w, 1, 0), gcv::ShapeError);
    }
}

TEST_CASE("conv_transpose2d matches the scatter definition") {
    gcv::Rng rng = gcv::make_rng(21, 1);
    auto x = Tensor<double>::zeros({2, 3, 4, 4});
    auto w = Tensor<double>::zeros({3, 2, 2, 2});
    auto b = Tensor<double>::zeros({2});
    gcvtest::fill_uniform(x, -1, 1, rng);
    gcvtest::fill_uniform(w, -1, 1, rng);
    gcvtest::fill_uniform(b, -1, 1, rng);

    auto y2 = gcv::conv_transpose2d(x, w, b, 2);
    REQUIRE(y2.shape == Shape{2, 2, 8, 8});
    REQUIRE(tensors_close(y2, convt_reference(x, w, b, 2)));

    auto y1 = gcv::conv_transpose2d(x, w, b, 1);
    REQUIRE(y1.shape == Shape{2, 2, 5, 5});
    REQUIRE(tensors_close(y1, convt_reference(x, w, b, 1)));

    REQUIRE_THROWS_AS(gcv::conv_transpose2d(x, Tensor<double>::zeros({4, 2, 2, 2}), b, 2),
                      gcv::ShapeError);
}

TEST_CASE("maxpool2d picks window maxima, first index on ties") {
    auto x = Tensor<double>::of({1, 1, 2, 4}, {5, 5, 1, 2, 3, 1, 2, 0});
    auto y = gcv::maxpool2d(x, 2, 2);
    REQUIRE(y.shape == Shape{1, 1, 1, 2});
    REQUIRE(y.ptr()[0] == 5.0);
    REQUIRE(y.ptr()[1] == 2.0);

    gcv::Tape<double> tape;
    tape.watch(x);
    auto loss = gcv::sum_all(gcv::maxpool2d(x, 2, 2));
    tape.backward(loss);
    auto g = tape.grad(x);
    // the tied 5 at flat index 0 wins; the tied 2 at flat index 3 wins
    REQUIRE(g.ptr()[0] == 1.0);
    REQUIRE(g.ptr()[1] == 0.0);
    REQUIRE(g.ptr()[3] == 1.0);
    REQUIRE(g.ptr()[6] == 0.0);

    REQUIRE_THROWS_AS(gcv::maxpool2d(Tensor<double>::zeros({1, 1, 1, 1}), 2, 2),
                      gcv::ShapeError);
}

TEST_CASE("resize_bilinear uses half-pixel centers") {
    SECTION("identity at equal size") {
        gcv::Rng rng = gcv::make_rng(21, 2);
        auto x = Tensor<double>::zeros({1, 2, 5, 4});
        gcvtest::fill_uniform(x, -1, 1, rng);
        REQUIRE(tensors_close(gcv::resize_bilinear(x, 5, 4), x));
    }
    SECTION("2x2 -> 4x4 interpolates between centers") {
        auto x = Tensor<double>::of({1, 1, 2, 2}, {0, 1, 2, 3});
        auto y = gcv::resize_bilinear(x, 4, 4);
        // corners clamp to the nearest source pixel
        REQUIRE(y.ptr()[0] == 0.0);
        REQUIRE(y.ptr()[3] == 1.0);
        REQUIRE(y.ptr()[12] == 2.0);
        REQUIRE(y.ptr()[15] == 3.0);
        // interior sample at (1,1): src = 0.25 -> 0.25*(1+2) + values
        REQUIRE(std::abs(y.ptr()[5] - 0.75) < 1e-12);
    }
    SECTION("2x downsample averages 2x2 blocks") {
        auto x = Tensor<double>::of({1, 1, 2, 4}, {1, 3, 5, 7, 2, 4, 6, 8});
        auto y = gcv::resize_bilinear(x, 1, 2);
        REQUIRE(std::abs(y.ptr()[0] - 2.5) < 1e-12);
        REQUIRE(std::abs(y.ptr()[1] - 6.5) < 1e-12);
    }
}

TEST_CASE("batchnorm2d normalizes and tracks running statistics") {
    gcv::Rng rng = gcv::make_rng(21, 3);
    const i64 B = 4, C = 3, H = 5, W = 5;
    auto x = Tensor<double>::zeros({B, C, H, W});
    gcvtest::fill_uniform(x, -3, 3, rng);
    auto gamma = Tensor<double>::full({C}, 1.0);
    auto beta = Tensor<double>::zeros({C});
    auto rm = Tensor<double>::zeros({C});
    auto rv = Tensor<double>::full({C}, 1.0);

    auto y = gcv::batchnorm2d(x, gamma, beta, rm, rv, true);
    const i64 n = B * H * W;
    for (i64 c = 0; c < C; ++c) {
        double mean = 0, var = 0, xmean = 0, xvar = 0;
        for (i64 b = 0; b < B; ++b)
            for (i64 i = 0; i < H * W; ++i) {
                mean += y.ptr()[(b * C + c) * H * W + i];
                xmean += x.ptr()[(b * C + c) * H * W + i];
            }
        mean /= n;
        xmean /= n;
        for (i64 b = 0; b < B; ++b)
            for (i64 i = 0; i < H * W; ++i) {
                var += std::pow(y.ptr()[(b * C + c) * H * W + i] - mean, 2);
                xvar += std::pow(x.ptr()[(b * C + c) * H * W + i] - xmean, 2);
            }
        var /= n;
        xvar /= n;
        REQUIRE(std::abs(mean) < 1e-10);
        REQUIRE(std::abs(var - 1.0) < 1e-4);  // eps shrinks it slightly
        // momentum 0.1 from (0, 1), with the unbiased variance
        REQUIRE(std::abs(rm.ptr()[c] - 0.1 * xmean) < 1e-10);
        REQUIRE(std::abs(rv.ptr()[c] - (0.9 + 0.1 * xvar * n / (n - 1))) < 1e-10);
    }

    SECTION("eval mode uses the running statistics") {
        auto rm2 = rm.clone();
        auto rv2 = rv.clone();
        auto ye = gcv::batchnorm2d(x, gamma, beta, rm2, rv2, false);
        for (i64 i = 0; i < 5; ++i) {
            const i64 c = (i / (H * W)) % C;
            const double expect = (x.ptr()[i] - rm.ptr()[c]) / std::sqrt(rv.ptr()[c] + 1e-5);
            REQUIRE(std::abs(ye.ptr()[i] - expect) < 1e-10);
        }
        // eval must not move the running stats
        REQUIRE(rm2.ptr()[0] == rm.ptr()[0]);
        REQUIRE(rv2.ptr()[0] == rv.ptr()[0]);
    }

    SECTION("single-element statistics are an error") {
        auto x1 = Tensor<double>::zeros({1, C, 1, 1});
        REQUIRE_THROWS_AS(gcv::batchnorm2d(x1, gamma, beta, rm, rv, true), gcv::NumericError);
    }
}

TEST_CASE("layernorm variants agree through a layout permute") {
    gcv::Rng rng = gcv::make_rng(21, 4);
    auto x = Tensor<double>::zeros({2, 5, 3, 4});  // NCHW, C = 5
    gcvtest::fill_uniform(x, -2, 2, rng);
    auto gamma = Tensor<double>::zeros({5});
    auto beta = Tensor<double>::zeros({5});
    gcvtest::fill_uniform(gamma, 0.5, 1.5, rng);
    gcvtest::fill_uniform(beta, -0.5, 0.5, rng);

    auto direct = gcv::layernorm_cf(x, gamma, beta);
    auto via_nhwc = gcv::permute(
        gcv::layernorm(gcv::permute(x, {0, 2, 3, 1}), gamma, beta), {0, 3, 1, 2});
    REQUIRE(tensors_close(direct, via_nhwc, 1e-12));

    auto rows = gcv::layernorm(gcv::permute(x, {0, 2, 3, 1}), gamma, beta);
    for (i64 r = 0; r < 3; ++r) {
        double m = 0;
        for (i64 d = 0; d < 5; ++d)
            m += (rows.ptr()[r * 5 + d] - beta.ptr()[d]) / gamma.ptr()[d];
        REQUIRE(std::abs(m / 5) < 1e-10);
    }
}

TEST_CASE("spatial op gradients match central differences") {
    for (const auto& chk : gcvtest::op_gradchecks()) {
        if (!is_nn_check(chk.name)) continue;
        INFO(chk.name);
        CHECK(chk.rel_error() < kOpTol);
    }
}
