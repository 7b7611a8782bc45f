#include "mirrorfill/gradsuite.hpp"

#include <random>

#include "mirrorfill/geometry.hpp"
#include "mirrorfill/illumination.hpp"
#include "mirrorfill/losses.hpp"
#include "mirrorfill/masking.hpp"
#include "mirrorfill/pipeline.hpp"
#include "mirrorfill/synthdata.hpp"

namespace mirrorfill {
namespace {

using Fn = std::function<Var<double>(const std::vector<Var<double>>&)>;

Tensor<double> uniform(Shape shape, std::mt19937_64& rng, double lo, double hi)
{
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor<double> t(std::move(shape));
    for (double& v : t.vec()) {
        v = u(rng);
    }
    return t;
}

// Normalized flow whose sample points stay 0.2 px away from lattice lines,
// where bilinear sampling is not differentiable.
Tensor<double> off_lattice_flow(int h, int w, std::mt19937_64& rng)
{
    std::uniform_int_distribution<int> xi(0, w - 2), yi(0, h - 2);
    std::uniform_real_distribution<double> frac(0.2, 0.8);
    Tensor<double> f(Shape{2, h, w});
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            f.at(0, i, j) = xi(rng) + frac(rng);
            f.at(1, i, j) = yi(rng) + frac(rng);
        }
    }
    return normalize_pixel_flow(f, h, w);
}

GradSuiteEntry check(const std::string& name, const Fn& fn, const std::vector<Tensor<double>>& inputs,
                     std::uint64_t seed, std::size_t max_coords = 0)
{
    GradCheckOptions o;
    o.seed = seed;
    o.max_coords_per_input = max_coords;
    const GradCheckResult r = grad_check(fn, inputs, o);
    return {name, r.max_rel_error, kGradTolerance, r.checked};
}

Fn frozen_input(const std::function<Var<double>(const Var<double>&)>& f)
{
    return [f](const std::vector<Var<double>>& v) { return f(v[0]); };
}

}  // namespace

std::vector<GradSuiteEntry> run_gradient_suite(std::uint64_t seed)
{
    std::mt19937_64 rng(seed * 7919 + 17);
    std::vector<GradSuiteEntry> out;
    const int h = 6, w = 7;

    {
        const auto src = uniform(Shape{3, h, w}, rng, -1.0, 1.0);
        const auto flow = off_lattice_flow(h, w, rng);
        const Var<double> src_c = Var<double>::constant(src), flow_c = Var<double>::constant(flow);
        out.push_back(check("warp wrt source",
                            frozen_input([&](const Var<double>& s) { return bilinear_warp(s, flow_c); }), {src}, seed));
        out.push_back(check("warp wrt flow",
                            frozen_input([&](const Var<double>& f) { return bilinear_warp(src_c, f); }), {flow}, seed));
    }
    {
        LandmarkSet lm;
        std::uniform_real_distribution<double> px(0.5, w - 1.5), py(0.5, h - 1.5);
        lm.pts = {{px(rng), py(rng)}, {px(rng), py(rng)}, {px(rng), py(rng)}};
        lm.flip_perm = {1, 0, 2};
        // Target points must lie inside the image for any flip.
        const LandmarkSet target = flip_landmarks(lm, w);
        const auto flow = uniform(Shape{2, h, w}, rng, -0.9, 0.9);
        out.push_back(check("landmark loss",
                            frozen_input([&](const Var<double>& f) { return landmark_loss(f, lm, target); }), {flow},
                            seed));
        out.push_back(check("tv loss", frozen_input([](const Var<double>& f) { return tv_loss(f); }),
                            {uniform(Shape{2, h, w}, rng, -1.0, 1.0)}, seed));
    }
    out.push_back(check("symmetry loss",
                        [](const std::vector<Var<double>>& v) { return perceptual_symmetry_loss(v[0], v[1], v[2], v[3]); },
                        {uniform(Shape{4, h, w}, rng, -1.0, 1.0), uniform(Shape{4, h, w}, rng, -1.0, 1.0),
                         off_lattice_flow(h, w, rng), uniform(Shape{1, h, w}, rng, 0.0, 1.0)},
                        seed));
    out.push_back(check("illumination loss",
                        [](const std::vector<Var<double>>& v) { return illumination_consistency_loss(v[0], v[1], v[2]); },
                        {uniform(Shape{3, h, w}, rng, 0.0, 1.0), uniform(Shape{3, h, w}, rng, 0.2, 3.0),
                         uniform(Shape{3, h, w}, rng, 0.0, 1.0)},
                        seed));
    out.push_back(check("l2 loss", [](const std::vector<Var<double>>& v) { return l2_loss(v[0], v[1]); },
                        {uniform(Shape{3, h, w}, rng, 0.0, 1.0), uniform(Shape{3, h, w}, rng, 0.0, 1.0)}, seed));
    {
        const Network<double> psi = build_feature_extractor<double>(NetScale{8}, 32);
        LossWeights lw;
        out.push_back(check(
            "reconstruction loss",
            [&](const std::vector<Var<double>>& v) { return reconstruction_loss(v[0], v[1], psi, lw); },
            {uniform(Shape{3, 32, 32}, rng, 0.0, 1.0), uniform(Shape{3, 32, 32}, rng, 0.0, 1.0)}, seed, 64));
    }
    {
        const LossWeights lw;
        out.push_back(check("discriminator loss",
                            [](const std::vector<Var<double>>& v) { return discriminator_loss(v[0], v[1]); },
                            {uniform(Shape{1, 4, 4}, rng, 0.05, 0.95), uniform(Shape{1, 4, 4}, rng, 0.05, 0.95)}, seed));
        out.push_back(check(
            "adversarial loss",
            [&](const std::vector<Var<double>>& v) {
                std::array<Var<double>, 4> parts;
                for (int i = 0; i < 4; ++i) {
                    parts[i] = generator_adversarial_loss(v[i + 1]);
                }
                return combine_adversarial(generator_adversarial_loss(v[0]), parts, lw);
            },
            {uniform(Shape{1, 4, 4}, rng, 0.05, 0.95), uniform(Shape{1, 3, 3}, rng, 0.05, 0.95),
             uniform(Shape{1, 3, 3}, rng, 0.05, 0.95), uniform(Shape{1, 3, 3}, rng, 0.05, 0.95),
             uniform(Shape{1, 3, 3}, rng, 0.05, 0.95)},
            seed));
    }
    {
        // Width-4 model, full pipeline including the flipped RecNet pass.
        const int size = 32;
        Model<double> model;
        model.flow = make_network<double>(describe_flownet(4, size), seed * 3 + 1);
        model.light = make_network<double>(describe_lightnet(4, size), seed * 3 + 2);
        model.rec = make_network<double>(describe_recnet(4, size, 1, false), seed * 3 + 3);
        const SyntheticFaceSample face = generate_face(seed, size, random_asymmetry(seed));
        const Tensor<float> hole = left_eye_hole_mask(face);
        const Tensor<double> mask = hole.cast<double>();
        const Tensor<double> occluded = apply_occlusion(face.image, hole).cast<double>();
        const Var<double> truth = Var<double>::constant(face.image.cast<double>());
        std::vector<Var<double>> leaves;
        for (Network<double>* n : model.nets()) {
            leaves.insert(leaves.end(), n->params.begin(), n->params.end());
        }
        PipelineOptions opts;
        opts.flipped_pass = true;
        auto objective = [&]() {
            const PipelineOutput<double> p = run_pipeline(model, occluded, mask, opts);
            const Shape& fs = p.feat.shape();
            Var<double> loss = l2_loss(p.completed, truth);
            loss = ag::add(loss, perceptual_symmetry_loss(p.feat, p.feat_flip, downsample_flow(p.flow, fs[1], fs[2]),
                                                          resize_bilinear(p.s2, fs[1], fs[2])));
            loss = ag::add(loss, illumination_consistency_loss(bilinear_warp(flip_horizontal(truth), p.flow), p.ratio, truth));
            return ag::add(loss, l2_loss(p.stage1, truth));
        };
        GradCheckOptions o;
        o.seed = seed;
        o.max_coords_per_input = 3;
        const GradCheckResult r = grad_check_leaves(objective, leaves, o);
        out.push_back({"width-4 network, end to end", r.max_rel_error, kNetworkGradTolerance, r.checked});
    }
    return out;
}

}  // namespace mirrorfill
