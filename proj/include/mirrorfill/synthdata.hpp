#pragma once

#include <cstdint>
#include <utility>

#include "mirrorfill/geometry.hpp"
#include "mirrorfill/networks.hpp"

namespace mirrorfill {

/// Departures from a perfectly symmetric frontal face. `illum_delta` in
/// (-1, 1) dims one side to gain 1 - |delta| (left for positive values);
/// `shear` is the horizontal offset per row, in pixels per pixel.
struct Asymmetry {
    double illum_delta = 0.0;
    double shear = 0.0;
};

struct SyntheticFaceSample {
    Tensor<float> image;  // 3 x S x S, lit and sheared
    Tensor<float> unlit;  // same geometry, unit gain
    LandmarkSet landmarks;
    std::pair<double, double> illum_gain{1.0, 1.0};  // (left, right)
    double shear = 0.0;
    Tensor<float> mirror_flow;  // 2 x S x S, normalized
    std::uint64_t seed = 0;
};

inline constexpr int kDefaultLandmarkCount = 10;
inline constexpr float kHoleFill = 0.5f;

/// Deterministic face from smooth blobs. Requires size >= 32 and
/// landmark_count >= 10; extra landmarks are placed on the face outline.
SyntheticFaceSample generate_face(std::uint64_t seed, int size, const Asymmetry& asym,
                                  int landmark_count = kDefaultLandmarkCount);

/// Grouping of the generator's landmarks into left eye, right eye, nose, mouth.
PartLayout face_part_layout();

/// I * M + 0.5 * (1 - M); mask is 1 x H x W binary.
Tensor<float> apply_occlusion(const Tensor<float>& image, const Tensor<float>& mask);

/// Flow taking each pixel of the sample to its mirror partner in the flip.
Tensor<float> exact_mirror_flow(const SyntheticFaceSample& sample);

/// Hole covering the left eye (image left) with a margin; the right eye stays
/// visible so the hole is mirror-fillable.
Tensor<float> left_eye_hole_mask(const SyntheticFaceSample& sample);

/// Hole centred on one facial part (0..3 as in face_part_layout), scaled by
/// `grow` relative to the part box.
Tensor<float> part_hole_mask(const SyntheticFaceSample& sample, int part, double grow);

enum class Split { Train, Validation, Test };

/// Seed intervals: train [0, 100000), validation [100000, 200000), test
/// [200000, 300000). Index must lie inside the interval's width.
std::uint64_t split_seed(Split split, std::uint64_t index);

/// Random asymmetry drawn from the seed, |delta| <= 0.4, |shear| <= 0.08.
Asymmetry random_asymmetry(std::uint64_t seed);

/// Training/validation hole for sample `seed`: a random rectangle, irregular
/// strokes or a part-centred box.
Tensor<float> random_training_mask(std::uint64_t seed, const SyntheticFaceSample& sample);

}  // namespace mirrorfill
