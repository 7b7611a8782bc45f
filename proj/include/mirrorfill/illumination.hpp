#pragma once

#include <filesystem>

#include "mirrorfill/autograd.hpp"

namespace mirrorfill {

inline constexpr double kRatioMin = 0.1;
inline constexpr double kRatioMax = 10.0;

/// Clamps a ratio map to [0.1, 10].
template <typename T>
Var<T> clamp_ratio(const Var<T>& r);

/// clamp(s1 * (i_w * r) + (1 - s1) * i_o, 0, 1). `s1` may have one channel,
/// in which case it is broadcast over the image channels.
template <typename T>
Var<T> compose_stage1(const Var<T>& i_o, const Var<T>& i_w, const Var<T>& r, const Var<T>& s1);

/// mean((i_w_prime * r - i)^2).
template <typename T>
Var<T> illumination_consistency_loss(const Var<T>& i_w_prime, const Var<T>& r, const Var<T>& i);

/// RGB rendering of log(r) averaged over channels: blue below 1, white at 1,
/// red above, saturating at the clamp bounds. Returns 3 x H x W in [0,1].
Tensor<float> ratio_false_color(const Tensor<float>& r);

}  // namespace mirrorfill
