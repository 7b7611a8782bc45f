#pragma once

#include <cstdint>

#include "mirrorfill/autograd.hpp"

namespace mirrorfill {

/// Binary input mask (1 = present, 0 = missing) together with the soft masks
/// derived from a flow: warped flip, mirror-fillable region s1 and the
/// remaining generative region s2.
template <typename T>
struct MaskPair {
    Tensor<T> m;
    Tensor<T> m_flip;
    Tensor<T> m_warp;
    Tensor<T> s1;
    Tensor<T> s2;
};

/// s1 = m_warp * (1 - m). Differentiable in m_warp.
template <typename T>
Var<T> make_s1(const Var<T>& m_warp, const Var<T>& m);

/// s2 = 1 - m - s1, with dust below 1e-8 clamped to zero.
template <typename T>
Var<T> make_s2(const Var<T>& m, const Var<T>& s1);

/// 1 where soft >= threshold, else 0.
template <typename T>
Tensor<T> binarize(const Tensor<T>& soft, T threshold);

/// Full reporting view: warps the flipped mask by `flow` and, when
/// `binarize_warp` is set, thresholds m_warp at 0.5 before the partition.
template <typename T>
MaskPair<T> make_mask_pair(const Tensor<T>& m, const Tensor<T>& flow, bool binarize_warp);

/// Throws ValidationError unless every entry is exactly 0 or 1.
template <typename T>
void require_binary(const Tensor<T>& m, const char* what);

inline constexpr double kMaxHoleFraction = 0.6;

/// One axis-aligned rectangle of zeros whose area fraction lies in
/// [min_frac, max_frac]; shape 1 x H x W.
Tensor<float> random_rect_mask(std::uint64_t seed, int height, int width, double min_frac, double max_frac);

/// Union of random polyline strokes, each a 4-connected lattice path dilated
/// by a square brush of side in [1, max_width]; shape 1 x H x W.
Tensor<float> random_irregular_mask(std::uint64_t seed, int height, int width, int stroke_count, int max_width);

/// Rectangle of zeros [x0, x0+w) x [y0, y0+h), clipped to the image.
Tensor<float> rect_hole_mask(int height, int width, int x0, int y0, int w, int h);

}  // namespace mirrorfill
