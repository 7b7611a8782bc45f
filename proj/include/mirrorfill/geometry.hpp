#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <utility>
#include <vector>

#include "mirrorfill/autograd.hpp"

namespace mirrorfill {

/// L landmark points in pixel units plus the index permutation that maps a
/// landmark onto its mirror partner (left eye <-> right eye, ...).
struct LandmarkSet {
    std::vector<std::pair<double, double>> pts;  // (x, y)
    std::vector<int> flip_perm;

    std::size_t size() const { return pts.size(); }
};

/// Landmarks of the horizontally flipped image, reindexed so entry i is the
/// position in the flip of the partner of landmark i.
LandmarkSet flip_landmarks(const LandmarkSet& lm, int width);

template <typename T>
Var<T> flip_horizontal(const Var<T>& img)
{
    return ag::flip_horizontal(img);
}

template <typename T>
Tensor<T> flip_horizontal(const Tensor<T>& img)
{
    return ag::flip_horizontal(Var<T>::constant(img)).value();
}

/// Normalized [-1,1] flow to pixel coordinates: x = (u+1)/2*(W-1), y likewise.
template <typename T>
Tensor<T> denormalize_flow(const Tensor<T>& flow, int height, int width);

/// Inverse of denormalize_flow.
template <typename T>
Tensor<T> normalize_pixel_flow(const Tensor<T>& pixel_flow, int height, int width);

/// The flow that sends every pixel to itself.
template <typename T>
Tensor<T> identity_flow(int height, int width);

/// Backward bilinear warp: out(i,j) samples `source` at flow(i,j).
template <typename T>
Var<T> bilinear_warp(const Var<T>& source, const Var<T>& flow);

/// Same kernel on a single-channel soft mask; values must lie in [0,1].
template <typename T>
Var<T> warp_mask(const Var<T>& mask_flip, const Var<T>& flow);

/// Bilinear (corner-aligned) resampling of both flow channels to the target
/// size; target dims must divide the source dims.
template <typename T>
Var<T> downsample_flow(const Var<T>& flow, int target_h, int target_w);

/// Corner-aligned bilinear resize of any CHW tensor (used for masks).
template <typename T>
Var<T> resize_bilinear(const Var<T>& x, int target_h, int target_w);

/// Pixel-unit flow values at fractional landmark positions; output 2 x 1 x L.
template <typename T>
Var<T> eval_flow_at_points(const Var<T>& flow, const LandmarkSet& pts);

struct GradCheckOptions {
    double epsilon = 1e-6;
    /// 0 checks every coordinate, otherwise a seeded random subset per input.
    std::size_t max_coords_per_input = 0;
    std::uint64_t seed = 0;
    /// Return true to skip (input index, element index), e.g. near kinks.
    std::function<bool(std::size_t, std::size_t)> skip;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
};

/// Compares reverse-mode gradients of `fn` against central differences.
/// Non-scalar outputs are contracted with fixed random weights. The relative
/// error of a coordinate is |a - n| / max(|a|, |n|, 1e-3 * max_k |a_k|).
GradCheckResult grad_check(const std::function<Var<double>(const std::vector<Var<double>>&)>& fn,
                           const std::vector<Tensor<double>>& inputs, const GradCheckOptions& options = {});

/// Variant that perturbs existing leaves in place (network weights).
GradCheckResult grad_check_leaves(const std::function<Var<double>()>& fn, const std::vector<Var<double>>& leaves,
                                  const GradCheckOptions& options = {});

/// Debug export: "SFLW", u16 H, u16 W, then the x and y planes as LE float32.
void write_flow_raw(const std::filesystem::path& path, const Tensor<float>& flow);
Tensor<float> read_flow_raw(const std::filesystem::path& path);

}  // namespace mirrorfill
