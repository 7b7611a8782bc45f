#pragma once

#include <cstdint>
#include <vector>

#include "mirrorfill/networks.hpp"
#include "mirrorfill/synthdata.hpp"

namespace mirrorfill {

/// The three generator networks. A plain model has no warping subnet:
/// stage 1 is skipped and RecNet sees the occluded image directly.
template <typename T>
struct Model {
    bool plain = false;
    Network<T> flow;
    Network<T> light;
    Network<T> rec;

    std::vector<Network<T>*> nets();
    std::vector<const Network<T>*> nets() const;
};

template <typename T>
Model<T> build_model(NetScale scale, int input_size, int tap_level, bool plain, std::uint64_t seed);

struct PipelineOptions {
    bool train = false;
    std::uint64_t dropout_seed = 0;
    /// Stop after the stage-1 composite (no RecNet pass).
    bool warp_only = false;
    /// Also run RecNet on the flipped stage-1 result and mask.
    bool flipped_pass = false;
};

template <typename T>
struct PipelineOutput {
    Var<T> occluded;  // I^o
    Var<T> mask;      // M
    Var<T> flow;      // normalized, 2 x H x W
    Var<T> warped;    // I^w
    Var<T> ratio;     // R
    Var<T> m_warp;
    Var<T> s1;
    Var<T> s2;
    Var<T> stage1;     // I-hat^1
    Var<T> completed;  // I-hat, raw RecNet output
    Var<T> feat;       // decoder tap
    Var<T> feat_flip;  // tap of the flipped pass
};

/// flip -> FlowNet -> warp -> LightNet -> composite -> RecNet.
template <typename T>
PipelineOutput<T> run_pipeline(const Model<T>& model, const Tensor<T>& occluded, const Tensor<T>& mask,
                               const PipelineOptions& options = {});

/// Eval-mode completion of an occluded image; with `preserve_known` the known
/// pixels of the input are copied back over the network output.
Tensor<float> complete_image(const Model<float>& model, const Tensor<float>& occluded, const Tensor<float>& mask,
                             bool preserve_known, PipelineOutput<float>* intermediates = nullptr);

struct MetricReport {
    std::size_t count = 0;
    double psnr = 0.0;
    double ssim = 0.0;
    double hole_psnr = 0.0;
    double gray_psnr = 0.0;       // gray fill, whole image
    double gray_hole_psnr = 0.0;  // gray fill, hole only
    std::vector<double> per_image_psnr;
    std::vector<double> per_image_hole_psnr;
};

enum class MaskKind { LeftEye, Random };

/// Test-split samples [first, first + count) with their holes, completed and
/// scored; a null model scores the ground truth itself.
MetricReport eval_set(const Model<float>* model, std::uint64_t first, std::uint64_t count, MaskKind kind,
                      int input_size, bool preserve_known = true);

/// Mean landmark loss of the model's flow on validation samples [first, first + count).
double mean_landmark_loss(const Model<float>& model, std::uint64_t first, std::uint64_t count, int input_size);

/// Deterministic held-out sample: face, hole and occluded image.
struct HeldOutSample {
    SyntheticFaceSample face;
    Tensor<float> mask;
    Tensor<float> occluded;
};

HeldOutSample make_sample(Split split, std::uint64_t index, int input_size, MaskKind kind);

}  // namespace mirrorfill
