#include "mirrorfill/pipeline.hpp"

#include "mirrorfill/geometry.hpp"
#include "mirrorfill/illumination.hpp"
#include "mirrorfill/losses.hpp"
#include "mirrorfill/masking.hpp"
#include "mirrorfill/metrics.hpp"

namespace mirrorfill {

template <typename T>
std::vector<Network<T>*> Model<T>::nets()
{
    if (plain) {
        return {&rec};
    }
    return {&flow, &light, &rec};
}

template <typename T>
std::vector<const Network<T>*> Model<T>::nets() const
{
    if (plain) {
        return {&rec};
    }
    return {&flow, &light, &rec};
}

template <typename T>
Model<T> build_model(NetScale scale, int input_size, int tap_level, bool plain, std::uint64_t seed)
{
    Model<T> m;
    m.plain = plain;
    if (!plain) {
        m.flow = build_flownet<T>(scale, input_size, seed * 16 + 1);
        m.light = build_lightnet<T>(scale, input_size, seed * 16 + 2);
    }
    m.rec = build_recnet<T>(scale, input_size, tap_level, seed * 16 + 3);
    return m;
}

template <typename T>
PipelineOutput<T> run_pipeline(const Model<T>& model, const Tensor<T>& occluded, const Tensor<T>& mask,
                               const PipelineOptions& options)
{
    const Shape expected{3, model.rec.arch.input_size, model.rec.arch.input_size};
    if (occluded.shape() != expected) {
        throw DimensionError("pipeline: expected a " + std::to_string(expected[1]) + "x" +
                             std::to_string(expected[2]) + " RGB image, got " + shape_str(occluded.shape()));
    }
    if (mask.shape() != Shape{1, expected[1], expected[2]}) {
        throw DimensionError("pipeline: mask " + shape_str(mask.shape()) + " does not match the image size " +
                             std::to_string(expected[1]) + "x" + std::to_string(expected[2]));
    }
    require_binary(mask, "pipeline mask");
    PipelineOutput<T> out;
    out.occluded = Var<T>::constant(occluded);
    out.mask = Var<T>::constant(mask);
    const ForwardOptions fwd{options.train, options.dropout_seed, false};

    if (model.plain) {
        out.stage1 = out.occluded;
        out.s1 = Var<T>::constant(Tensor<T>(mask.shape()));
        out.s2 = ag::one_minus(out.mask);
    } else {
        const Var<T> flipped = flip_horizontal(out.occluded);
        const Var<T> input = ag::concat_channels(out.occluded, flipped);
        out.flow = forward(model.flow, input, fwd).output;
        out.ratio = forward(model.light, input, fwd).output;
        out.warped = bilinear_warp(flipped, out.flow);
        out.m_warp = warp_mask(flip_horizontal(out.mask), out.flow);
        out.s1 = make_s1(out.m_warp, out.mask);
        out.s2 = make_s2(out.mask, out.s1);
        out.stage1 = compose_stage1(out.occluded, out.warped, out.ratio, out.s1);
    }
    if (options.warp_only) {
        return out;
    }
    const Var<T> s2x3 = ag::repeat_channels(out.s2, 3);
    const ForwardResult<T> r = forward(model.rec, ag::concat_channels(out.stage1, s2x3), fwd);
    out.completed = r.output;
    out.feat = r.tap;
    if (options.flipped_pass) {
        const Var<T> input = ag::concat_channels(flip_horizontal(out.stage1), flip_horizontal(s2x3));
        ForwardOptions flipped_fwd = fwd;
        flipped_fwd.dropout_seed = options.dropout_seed ^ 0x5DEECE66DULL;
        out.feat_flip = forward(model.rec, input, flipped_fwd).tap;
    }
    return out;
}

Tensor<float> complete_image(const Model<float>& model, const Tensor<float>& occluded, const Tensor<float>& mask,
                             bool preserve_known, PipelineOutput<float>* intermediates)
{
    PipelineOutput<float> out = run_pipeline(model, occluded, mask);
    Tensor<float> result = out.completed.value();
    if (preserve_known) {
        for (int c = 0; c < result.channels(); ++c) {
            for (int i = 0; i < result.height(); ++i) {
                for (int j = 0; j < result.width(); ++j) {
                    if (mask.at(0, i, j) != 0.0f) {
                        result.at(c, i, j) = occluded.at(c, i, j);
                    }
                }
            }
        }
    }
    if (intermediates) {
        *intermediates = std::move(out);
    }
    return result;
}

HeldOutSample make_sample(Split split, std::uint64_t index, int input_size, MaskKind kind)
{
    const std::uint64_t seed = split_seed(split, index);
    HeldOutSample s;
    s.face = generate_face(seed, input_size, random_asymmetry(seed));
    s.mask = kind == MaskKind::LeftEye ? left_eye_hole_mask(s.face) : random_training_mask(seed, s.face);
    s.occluded = apply_occlusion(s.face.image, s.mask);
    return s;
}

MetricReport eval_set(const Model<float>* model, std::uint64_t first, std::uint64_t count, MaskKind kind,
                      int input_size, bool preserve_known)
{
    if (count == 0) {
        throw ValidationError("eval_set: empty seed range");
    }
    MetricReport r;
    r.count = count;
    for (std::uint64_t k = first; k < first + count; ++k) {
        const HeldOutSample s = make_sample(Split::Test, k, input_size, kind);
        const Tensor<float> hole = map(s.mask, [](float v) { return 1.0f - v; });
        const Tensor<float> result =
            model ? complete_image(*model, s.occluded, s.mask, preserve_known) : s.face.image;
        const double p = psnr(result, s.face.image);
        const double hp = psnr_in_region(result, s.face.image, hole);
        r.per_image_psnr.push_back(p);
        r.per_image_hole_psnr.push_back(hp);
        r.psnr += p;
        r.hole_psnr += hp;
        r.ssim += ssim(result, s.face.image);
        r.gray_psnr += psnr(s.occluded, s.face.image);
        r.gray_hole_psnr += psnr_in_region(s.occluded, s.face.image, hole);
    }
    const double n = static_cast<double>(count);
    r.psnr /= n;
    r.hole_psnr /= n;
    r.ssim /= n;
    r.gray_psnr /= n;
    r.gray_hole_psnr /= n;
    return r;
}

double mean_landmark_loss(const Model<float>& model, std::uint64_t first, std::uint64_t count, int input_size)
{
    if (model.plain || count == 0) {
        throw ValidationError("mean_landmark_loss: needs a warping subnet and a non-empty range");
    }
    PipelineOptions opts;
    opts.warp_only = true;
    double acc = 0.0;
    for (std::uint64_t k = first; k < first + count; ++k) {
        const HeldOutSample s = make_sample(Split::Validation, k, input_size, MaskKind::Random);
        const PipelineOutput<float> out = run_pipeline(model, s.occluded, s.mask, opts);
        acc += landmark_loss(out.flow, s.face.landmarks, flip_landmarks(s.face.landmarks, input_size)).item();
    }
    return acc / static_cast<double>(count);
}

template struct Model<float>;
template struct Model<double>;
template Model<float> build_model(NetScale, int, int, bool, std::uint64_t);
template Model<double> build_model(NetScale, int, int, bool, std::uint64_t);
template PipelineOutput<float> run_pipeline(const Model<float>&, const Tensor<float>&, const Tensor<float>&,
                                            const PipelineOptions&);
template PipelineOutput<double> run_pipeline(const Model<double>&, const Tensor<double>&, const Tensor<double>&,
                                             const PipelineOptions&);

}  // namespace mirrorfill
