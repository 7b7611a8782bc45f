#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "mirrorfill/tensor.hpp"

namespace mirrorfill {

/// One polyline stroke of an irregular hole, vertices on the pixel lattice.
struct Stroke {
    std::vector<std::pair<int, int>> vertices;  // (x, y)
    int width = 1;
};

std::vector<Stroke> random_strokes(std::uint64_t seed, int height, int width, int stroke_count, int max_width);

/// 4-connected lattice walk from `from` to `to`, both ends included.
std::vector<std::pair<int, int>> lattice_path(std::pair<int, int> from, std::pair<int, int> to);

/// Hole indicator (1 = stroke pixel) for a single stroke.
Tensor<float> rasterize_stroke(const Stroke& stroke, int height, int width);

}  // namespace mirrorfill
