#include "doctest.h"

#include <cmath>

#include "mirrorfill/metrics.hpp"
#include "test_util.hpp"

using namespace mirrorfill;
using testutil::random_tensor;

namespace {

// Direct evaluation over every 8x8 window.
double naive_ssim(const Tensor<float>& a, const Tensor<float>& b)
{
    const double c1 = 1e-4, c2 = 9e-4;
    double total = 0.0;
    for (int c = 0; c < a.channels(); ++c) {
        double acc = 0.0;
        int windows = 0;
        for (int i = 0; i + 8 <= a.height(); ++i) {
            for (int j = 0; j + 8 <= a.width(); ++j) {
                double mx = 0.0, my = 0.0;
                for (int u = 0; u < 8; ++u) {
                    for (int v = 0; v < 8; ++v) {
                        mx += a.at(c, i + u, j + v) / 64.0;
                        my += b.at(c, i + u, j + v) / 64.0;
                    }
                }
                double vx = 0.0, vy = 0.0, cxy = 0.0;
                for (int u = 0; u < 8; ++u) {
                    for (int v = 0; v < 8; ++v) {
                        const double dx = a.at(c, i + u, j + v) - mx, dy = b.at(c, i + u, j + v) - my;
                        vx += dx * dx / 64.0;
                        vy += dy * dy / 64.0;
                        cxy += dx * dy / 64.0;
                    }
                }
                acc += (2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                ++windows;
            }
        }
        total += acc / windows;
    }
    return total / a.channels();
}

}  // namespace

TEST_CASE("psnr")
{
    const auto a = random_tensor<float>(Shape{3, 16, 16}, 1, 0.0, 1.0);
    const auto b = random_tensor<float>(Shape{3, 16, 16}, 2, 0.0, 1.0);
    CHECK(psnr(a, a) == 100.0);
    CHECK(psnr(a, b) == psnr(b, a));
    const Tensor<float> half(Shape{3, 4, 4}, 0.5f), zero(Shape{3, 4, 4}, 0.0f);
    CHECK(psnr(half, zero) == doctest::Approx(20.0 * std::log10(2.0)).epsilon(1e-9));
    CHECK(psnr(half, zero) == doctest::Approx(6.02).epsilon(1e-3));
    CHECK(psnr(half, zero, 255.0) > 50.0);
    CHECK_THROWS_AS(psnr(a, half), DimensionError);
}

TEST_CASE("psnr in a region")
{
    Tensor<float> a(Shape{3, 4, 4}, 0.0f), b(Shape{3, 4, 4}, 0.0f), region(Shape{1, 4, 4}, 0.0f);
    for (int c = 0; c < 3; ++c) {
        b.at(c, 0, 0) = 0.5f;
        b.at(c, 3, 3) = 0.1f;
    }
    region.at(0, 0, 0) = 1.0f;
    CHECK(psnr_in_region(a, b, region) == doctest::Approx(20.0 * std::log10(2.0)).epsilon(1e-9));
    region.at(0, 0, 0) = 0.0f;
    region.at(0, 1, 1) = 1.0f;
    CHECK(psnr_in_region(a, b, region) == 100.0);
}

TEST_CASE("ssim")
{
    const auto a = random_tensor<float>(Shape{3, 20, 17}, 3, 0.0, 1.0);
    auto b = a;
    for (std::size_t i = 0; i < b.size(); ++i) {
        b[i] = 0.7f * b[i] + 0.1f * std::sin(static_cast<float>(i));
    }
    CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(ssim(a, b) == doctest::Approx(naive_ssim(a, b)).epsilon(1e-9));
    CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-12));
    const auto inv = map(a, [](float v) { return 1.0f - v; });
    CHECK(ssim(a, inv) < 1.0);

    const double c1 = 1e-4;
    const Tensor<float> p(Shape{3, 8, 8}, 0.5f), q(Shape{3, 8, 8}, 0.6f);
    const double expected = (2 * 0.5 * 0.6 + c1) / (0.25 + 0.36 + c1);
    CHECK(ssim(p, q) == doctest::Approx(expected).epsilon(1e-6));
    CHECK_THROWS(ssim(Tensor<float>(Shape{3, 7, 9}), Tensor<float>(Shape{3, 7, 9})));
}
