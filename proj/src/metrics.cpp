#include "mirrorfill/metrics.hpp"

#include <cmath>
#include <vector>

namespace mirrorfill {
namespace {

double psnr_from_mse(double mse, double peak)
{
    if (mse <= 0.0) {
        return kPsnrCap;
    }
    return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

// Summed-area table with one row/column of zero padding.
std::vector<double> integral(const Tensor<float>& a, const Tensor<float>& b, int c, int mode)
{
    const int h = a.height(), w = a.width();
    std::vector<double> s(static_cast<std::size_t>(h + 1) * (w + 1), 0.0);
    for (int i = 0; i < h; ++i) {
        double row = 0.0;
        for (int j = 0; j < w; ++j) {
            const double x = a.at(c, i, j), y = b.at(c, i, j);
            const double v = mode == 0 ? x : mode == 1 ? y : mode == 2 ? x * x : mode == 3 ? y * y : x * y;
            row += v;
            s[(i + 1) * (w + 1) + j + 1] = s[i * (w + 1) + j + 1] + row;
        }
    }
    return s;
}

}  // namespace

double psnr(const Tensor<float>& a, const Tensor<float>& b, double peak)
{
    require_same_shape(a, b, "psnr");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - b[i];
        s += d * d;
    }
    return psnr_from_mse(s / static_cast<double>(a.size()), peak);
}

double psnr_in_region(const Tensor<float>& a, const Tensor<float>& b, const Tensor<float>& region, double peak)
{
    require_same_shape(a, b, "psnr_in_region");
    if (a.rank() != 3 || region.shape() != Shape{1, a.height(), a.width()}) {
        throw DimensionError("psnr_in_region: region must be 1 x H x W matching the images");
    }
    double s = 0.0;
    std::size_t n = 0;
    for (int c = 0; c < a.channels(); ++c) {
        for (int i = 0; i < a.height(); ++i) {
            for (int j = 0; j < a.width(); ++j) {
                if (region.at(0, i, j) != 0.0f) {
                    const double d = static_cast<double>(a.at(c, i, j)) - b.at(c, i, j);
                    s += d * d;
                    ++n;
                }
            }
        }
    }
    if (n == 0) {
        throw ValidationError("psnr_in_region: empty region");
    }
    return psnr_from_mse(s / static_cast<double>(n), peak);
}

double ssim(const Tensor<float>& a, const Tensor<float>& b, double range)
{
    require_same_shape(a, b, "ssim");
    if (a.rank() != 3 || a.height() < kSsimWindow || a.width() < kSsimWindow) {
        throw DimensionError("ssim: images must be C x H x W with H, W >= 8, got " + shape_str(a.shape()));
    }
    const double c1 = (0.01 * range) * (0.01 * range);
    const double c2 = (0.03 * range) * (0.03 * range);
    const int h = a.height(), w = a.width(), k = kSsimWindow;
    const double n = static_cast<double>(k * k);
    double total = 0.0;
    for (int c = 0; c < a.channels(); ++c) {
        std::vector<std::vector<double>> sat;
        for (int mode = 0; mode < 5; ++mode) {
            sat.push_back(integral(a, b, c, mode));
        }
        auto box = [&](int mode, int i, int j) {
            const auto& s = sat[mode];
            const int w1 = w + 1;
            return s[(i + k) * w1 + j + k] - s[i * w1 + j + k] - s[(i + k) * w1 + j] + s[i * w1 + j];
        };
        double acc = 0.0;
        for (int i = 0; i + k <= h; ++i) {
            for (int j = 0; j + k <= w; ++j) {
                const double mx = box(0, i, j) / n, my = box(1, i, j) / n;
                const double vx = std::max(0.0, box(2, i, j) / n - mx * mx);
                const double vy = std::max(0.0, box(3, i, j) / n - my * my);
                const double cxy = box(4, i, j) / n - mx * my;
                acc += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            }
        }
        total += acc / static_cast<double>((h - k + 1) * (w - k + 1));
    }
    return total / a.channels();
}

}  // namespace mirrorfill
