#pragma once

#include <cstdint>
#include <random>

#include "mirrorfill/tensor.hpp"

namespace testutil {

template <typename T = double>
mirrorfill::Tensor<T> random_tensor(mirrorfill::Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    mirrorfill::Tensor<T> t(std::move(shape));
    for (auto& v : t.vec()) {
        v = static_cast<T>(u(rng));
    }
    return t;
}

// Pixel flow whose sample points keep a margin from lattice lines and the
// border, so bilinear interpolation is smooth around each point.
inline mirrorfill::Tensor<double> smooth_pixel_flow(int h, int w, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> xi(0, w - 2), yi(0, h - 2);
    std::uniform_real_distribution<double> frac(0.2, 0.8);
    mirrorfill::Tensor<double> f(mirrorfill::Shape{2, h, w});
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            f.at(0, i, j) = xi(rng) + frac(rng);
            f.at(1, i, j) = yi(rng) + frac(rng);
        }
    }
    return f;
}

}  // namespace testutil
