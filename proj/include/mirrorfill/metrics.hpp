#pragma once

#include "mirrorfill/tensor.hpp"

namespace mirrorfill {

inline constexpr double kPsnrCap = 100.0;
inline constexpr int kSsimWindow = 8;

/// 10 log10(peak^2 / mse), capped at 100 dB.
double psnr(const Tensor<float>& a, const Tensor<float>& b, double peak = 1.0);

/// PSNR over the pixels where `region` (1 x H x W) is nonzero, all channels.
double psnr_in_region(const Tensor<float>& a, const Tensor<float>& b, const Tensor<float>& region, double peak = 1.0);

/// Mean SSIM over all 8x8 windows (stride 1, uniform weights), per channel
/// and then averaged; k1 = 0.01, k2 = 0.03, dynamic range L.
double ssim(const Tensor<float>& a, const Tensor<float>& b, double range = 1.0);

}  // namespace mirrorfill
