#include "doctest.h"

#include <cmath>

#include "mirrorfill/autograd.hpp"
#include "mirrorfill/geometry.hpp"
#include "test_util.hpp"

using namespace mirrorfill;
using testutil::random_tensor;

namespace {

// Direct-loop convolution used as an oracle for the GEMM path.
Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b, int s, int p)
{
    const int cin = x.channels(), h = x.height(), wd = x.width();
    const int cout = w.dim(0), k = w.dim(2);
    const int ho = (h + 2 * p - k) / s + 1, wo = (wd + 2 * p - k) / s + 1;
    Tensor<double> y(Shape{cout, ho, wo});
    for (int o = 0; o < cout; ++o) {
        for (int i = 0; i < ho; ++i) {
            for (int j = 0; j < wo; ++j) {
                double acc = b[o];
                for (int c = 0; c < cin; ++c) {
                    for (int u = 0; u < k; ++u) {
                        for (int v = 0; v < k; ++v) {
                            const int yy = i * s - p + u, xx = j * s - p + v;
                            if (yy >= 0 && yy < h && xx >= 0 && xx < wd) {
                                acc += w[((o * cin + c) * k + u) * k + v] * x.at(c, yy, xx);
                            }
                        }
                    }
                }
                y.at(o, i, j) = acc;
            }
        }
    }
    return y;
}

double dot(const Tensor<double>& a, const Tensor<double>& b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

}  // namespace

TEST_CASE("conv2d matches the direct loop")
{
    const auto x = random_tensor(Shape{3, 9, 8}, 1);
    const auto w = random_tensor(Shape{5, 3, 4, 4}, 2);
    const auto b = random_tensor(Shape{5}, 3);
    for (int s : {1, 2}) {
        const auto y = ag::conv2d(Var<double>::constant(x), Var<double>::constant(w), Var<double>::constant(b), s, 1);
        CHECK(max_abs_diff(y.value(), naive_conv(x, w, b, s, 1)) < 1e-12);
    }
}

TEST_CASE("transposed conv is the adjoint of conv")
{
    // <conv(x), y> = <x, conv_T(y)> with zero bias and shared weights.
    const auto x = random_tensor(Shape{3, 8, 8}, 4);
    const auto w = random_tensor(Shape{5, 3, 4, 4}, 5);
    const Tensor<double> zero_out(Shape{5}), zero_in(Shape{3});
    const auto cx = ag::conv2d(Var<double>::constant(x), Var<double>::constant(w), Var<double>::constant(zero_out), 2, 1);
    const auto y = random_tensor(cx.shape(), 6);
    const auto ty =
        ag::conv_transpose2d(Var<double>::constant(y), Var<double>::constant(w), Var<double>::constant(zero_in), 2, 1);
    REQUIRE(ty.shape() == x.shape());
    CHECK(dot(cx.value(), y) == doctest::Approx(dot(x, ty.value())).epsilon(1e-12));
}

TEST_CASE("convolution gradients")
{
    GradCheckOptions o;
    o.max_coords_per_input = 40;
    const auto r = grad_check(
        [](const std::vector<Var<double>>& v) { return ag::conv2d(v[0], v[1], v[2], 2, 1); },
        {random_tensor(Shape{2, 6, 6}, 7), random_tensor(Shape{3, 2, 4, 4}, 8), random_tensor(Shape{3}, 9)}, o);
    CHECK(r.max_rel_error < 1e-6);
    const auto t = grad_check(
        [](const std::vector<Var<double>>& v) { return ag::conv_transpose2d(v[0], v[1], v[2], 2, 1); },
        {random_tensor(Shape{3, 4, 4}, 10), random_tensor(Shape{3, 2, 4, 4}, 11), random_tensor(Shape{2}, 12)}, o);
    CHECK(t.max_rel_error < 1e-6);
}

TEST_CASE("instance norm normalizes each channel and differentiates")
{
    const auto x = random_tensor(Shape{2, 5, 5}, 13, -3.0, 5.0);
    const Tensor<double> g(Shape{2}, 1.0), b(Shape{2}, 0.0);
    const auto y = ag::instance_norm(Var<double>::constant(x), Var<double>::constant(g), Var<double>::constant(b), 1e-5);
    for (int c = 0; c < 2; ++c) {
        double m = 0.0, v = 0.0;
        for (int i = 0; i < 25; ++i) {
            m += y.value()[c * 25 + i] / 25.0;
        }
        for (int i = 0; i < 25; ++i) {
            v += std::pow(y.value()[c * 25 + i] - m, 2) / 25.0;
        }
        CHECK(std::abs(m) < 1e-12);
        CHECK(v == doctest::Approx(1.0).epsilon(1e-4));
    }
    const auto r = grad_check(
        [](const std::vector<Var<double>>& v) { return ag::instance_norm(v[0], v[1], v[2], 1e-5); },
        {x, random_tensor(Shape{2}, 14), random_tensor(Shape{2}, 15)});
    CHECK(r.max_rel_error < 1e-5);
}

TEST_CASE("elementwise ops and reductions differentiate")
{
    const auto a = random_tensor(Shape{2, 3, 3}, 16, 0.1, 0.9);
    const auto b = random_tensor(Shape{2, 3, 3}, 17, 0.1, 0.9);
    const auto r = grad_check(
        [](const std::vector<Var<double>>& v) {
            auto t = ag::add(ag::mul(ag::tanh(v[0]), ag::sigmoid(v[1])), ag::scale(ag::square(v[0]), 0.5));
            t = ag::sub(t, ag::one_minus(v[1]));
            t = ag::concat_channels(t, ag::flip_horizontal(v[0]));
            return ag::mean(ag::leaky_relu(ag::add_scalar(t, -0.3), 0.2));
        },
        {a, b});
    CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("binary cross-entropy at one half")
{
    const auto p = Var<double>::constant(Tensor<double>(Shape{1, 3, 3}, 0.5));
    CHECK(ag::binary_cross_entropy(p, 1.0).item() == doctest::Approx(std::log(2.0)));
    CHECK(ag::binary_cross_entropy(p, 0.0).item() == doctest::Approx(std::log(2.0)));
}

TEST_CASE("frozen inputs build no backward closure")
{
    const auto x = Var<double>::constant(random_tensor(Shape{1, 2, 2}, 18));
    const auto y = ag::mul(x, x);
    CHECK_FALSE(y.requires_grad());
    CHECK_FALSE(static_cast<bool>(y.node()->backward));
}

TEST_CASE("backward requires a scalar")
{
    const auto x = Var<double>::leaf(random_tensor(Shape{1, 2, 2}, 19));
    CHECK_THROWS_AS(ag::square(x).backward(), DimensionError);
}
