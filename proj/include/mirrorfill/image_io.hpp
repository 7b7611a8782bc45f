#pragma once

#include <filesystem>

#include "mirrorfill/tensor.hpp"

namespace mirrorfill {

/// 8-bit PNG to 3 x H x W in [0,1]; grey images are replicated, alpha dropped.
Tensor<float> read_png(const std::filesystem::path& path);

/// Writes a 1- or 3-channel tensor, clamped to [0,1] and rounded to 8 bits.
void write_png(const std::filesystem::path& path, const Tensor<float>& img);

/// Binary mask, 1 x H x W: pixels >= 128 (after grey conversion) are 1.
Tensor<float> read_mask(const std::filesystem::path& path);

}  // namespace mirrorfill
