// Acceptance run: one PASS/FAIL line per criterion.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mirrorfill/gradsuite.hpp"
#include "mirrorfill/illumination.hpp"
#include "mirrorfill/masking.hpp"
#include "mirrorfill/trainer.hpp"

namespace fs = std::filesystem;
using namespace mirrorfill;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

template <typename T>
Var<T> cst(const Tensor<T>& t)
{
    return Var<T>::constant(t);
}

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what)
    {
        if (!ok) {
            if (pass) {
                detail = what;
            }
            pass = false;
        }
    }
};

void note(const char* fmt, double a)
{
    std::printf("    ");
    std::printf(fmt, a);
    std::printf("\n");
    std::fflush(stdout);
}

// ---------------------------------------------------------------------------

Outcome gradients()
{
    Outcome o;
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed <= 4; ++seed) {
        for (const GradSuiteEntry& e : run_gradient_suite(seed)) {
            worst = std::max(worst, e.max_rel_error / e.tolerance);
            o.require(e.passed(), e.name + " seed " + std::to_string(seed));
        }
    }
    note("worst error / tolerance %.3g", worst);
    return o;
}

Tensor<double> random_pixel_flow(int h, int w, std::mt19937_64& rng)
{
    // Smooth random field: identity plus a few low-frequency bumps, with
    // occasional out-of-image excursions.
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double ax = u(rng) * 8, ay = u(rng) * 8, fx = 1 + 3 * std::abs(u(rng)), fy = 1 + 3 * std::abs(u(rng));
    const bool mirror = u(rng) > 0.0;
    Tensor<double> f(Shape{2, h, w});
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            const double x = mirror ? w - 1 - j : j;
            f.at(0, i, j) = x + ax * std::sin(fx * i / h * 3.14159);
            f.at(1, i, j) = i + ay * std::cos(fy * j / w * 3.14159);
        }
    }
    return f;
}

Outcome mask_partition()
{
    Outcome o;
    constexpr int n = 64;
    std::mt19937_64 rng(2024);
    for (std::uint64_t k = 0; k < 200; ++k) {
        const auto face = generate_face(split_seed(Split::Test, k), n, random_asymmetry(k));
        Tensor<double> m;
        switch (k % 3) {
            case 0: m = random_rect_mask(k, n, n, 0.05, 0.6).cast<double>(); break;
            case 1: m = random_irregular_mask(k, n, n, 1 + static_cast<int>(k % 5), 6).cast<double>(); break;
            default: m = random_training_mask(k, face).cast<double>(); break;
        }
        const auto flow = normalize_pixel_flow(random_pixel_flow(n, n, rng), n, n);
        const MaskPair<double> p = make_mask_pair(m, flow, true);
        for (std::size_t i = 0; i < m.size(); ++i) {
            const bool one_region = (p.m[i] == 1.0) + (p.s1[i] == 1.0) + (p.s2[i] == 1.0) == 1;
            const bool binary = (p.s1[i] == 0.0 || p.s1[i] == 1.0) && (p.s2[i] == 0.0 || p.s2[i] == 1.0);
            o.require(one_region && binary, "partition, pair " + std::to_string(k));
            o.require(p.s1[i] * p.m[i] == 0.0, "s1 * M, pair " + std::to_string(k));
        }

        // Symmetric hole: union of the hole and its mirror image.
        const Tensor<double> sym = [&] {
            Tensor<double> s = m;
            const Tensor<double> f = flip_horizontal(m);
            for (std::size_t i = 0; i < s.size(); ++i) {
                s[i] = m[i] * f[i];
            }
            return s;
        }();
        o.require(make_mask_pair(sym, identity_flow<double>(n, n), true).s1.max_value() == 0.0,
                  "symmetric hole, pair " + std::to_string(k));

        const auto half = left_eye_hole_mask(face).cast<double>();
        o.require(make_mask_pair(half, face.mirror_flow.cast<double>(), true).s2.max_value() == 0.0,
                  "half-face hole, pair " + std::to_string(k));
    }
    return o;
}

Outcome zero_cases()
{
    Outcome o;
    constexpr double tol = 1e-8;
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.05, 0.95);
    auto random = [&](Shape s) {
        Tensor<double> t(std::move(s));
        for (double& v : t.vec()) {
            v = u(rng);
        }
        return t;
    };
    double worst = 0.0;
    auto zero = [&](double v, const std::string& what) {
        worst = std::max(worst, std::abs(v));
        o.require(std::abs(v) <= tol, what);
    };

    constexpr int n = 64;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        // Landmarks: integer positions, flow pinned so each lands on its partner in the flip.
        const auto face = generate_face(seed, n, random_asymmetry(seed));
        LandmarkSet lm = face.landmarks;
        for (auto& [x, y] : lm.pts) {
            x = std::round(x);
            y = std::round(y);
        }
        const LandmarkSet lm_flip = flip_landmarks(lm, n);
        Tensor<double> pix = denormalize_flow(identity_flow<double>(n, n), n, n);
        for (std::size_t i = 0; i < lm.size(); ++i) {
            const int x = static_cast<int>(lm.pts[i].first), y = static_cast<int>(lm.pts[i].second);
            pix.at(0, y, x) = lm_flip.pts[i].first;
            pix.at(1, y, x) = lm_flip.pts[i].second;
        }
        zero(landmark_loss(cst(normalize_pixel_flow(pix, n, n)), lm, lm_flip).item(), "landmark");

        Tensor<double> flat(Shape{2, n, n});
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                flat.at(0, i, j) = -0.3 + 0.01 * static_cast<double>(seed);
                flat.at(1, i, j) = 0.2;
            }
        }
        zero(tv_loss(cst(flat)).item(), "tv");

        const auto img = random(Shape{3, n, n});
        zero(illumination_consistency_loss(cst(img), cst(Tensor<double>(Shape{3, n, n}, 1.0)), cst(img)).item(),
             "illumination consistency");

        const auto feat = random(Shape{8, 32, 32});
        const auto id = identity_flow<double>(32, 32);
        zero(perceptual_symmetry_loss(cst(feat), cst(feat), cst(id), cst(Tensor<double>(Shape{1, 32, 32}, 1.0))).item(),
             "perceptual symmetry");
        zero(perceptual_symmetry_loss(cst(feat), cst(random(Shape{8, 32, 32})), cst(id),
                                      cst(Tensor<double>(Shape{1, 32, 32}, 0.0)))
                 .item(),
             "perceptual symmetry, empty s2");

        zero(l2_loss(cst(img), cst(img)).item(), "l2");
        static const auto psi = build_feature_extractor<double>(NetScale{8}, n);
        zero(perceptual_loss(cst(img), cst(img), psi).item(), "perceptual");
    }
    note("largest zero-case value %.3g", worst);

    // Total objective: linear in every weight, including those applied inside
    // the reconstruction and adversarial terms.
    const auto a = random(Shape{3, n, n}), b = random(Shape{3, n, n});
    const auto psi = build_feature_extractor<double>(NetScale{8}, n);
    auto scalar = [](double v) { return cst(Tensor<double>::scalar(v)); };
    const auto g_global = scalar(0.9);
    const std::array<Var<double>, 4> g_parts{scalar(0.4), scalar(1.1), scalar(0.7), scalar(2.0)};
    auto objective = [&](const LossWeights& w) {
        LossTerms<double> t{reconstruction_loss(cst(a), cst(b), psi, w), combine_adversarial(g_global, g_parts, w),
                            scalar(0.02), scalar(0.004), scalar(2.5), scalar(0.6)};
        return total_loss(t, w).report.total;
    };
    std::vector<std::function<double&(LossWeights&)>> fields = {
        [](LossWeights& w) -> double& { return w.lambda_r2; }, [](LossWeights& w) -> double& { return w.lambda_rp; },
        [](LossWeights& w) -> double& { return w.lambda_ag; }, [](LossWeights& w) -> double& { return w.lambda_s; },
        [](LossWeights& w) -> double& { return w.lambda_l; },  [](LossWeights& w) -> double& { return w.lambda_lm; },
        [](LossWeights& w) -> double& { return w.lambda_tv; }};
    for (int i = 0; i < 4; ++i) {
        fields.push_back([i](LossWeights& w) -> double& { return w.lambda_ap[i]; });
    }
    const LossWeights base;
    const double f0 = objective(base);
    double worst_lin = 0.0;
    for (const auto& field : fields) {
        LossWeights w1 = base, w2 = base, wz = base;
        field(w1) += 1.5;
        field(w2) += 3.0;
        field(wz) = 0.0;
        const double d1 = objective(w1) - f0, d2 = objective(w2) - f0;
        // f(lambda) = f(0) + lambda * slope
        const double slope = d1 / 1.5;
        const double fz = objective(wz);
        LossWeights defaults = base;
        const double err = std::max(std::abs(d2 - 2.0 * d1), std::abs(fz + field(defaults) * slope - f0)) /
                           std::max(1.0, std::abs(f0));
        worst_lin = std::max(worst_lin, err);
    }
    note("largest linearity residual %.3g", worst_lin);
    o.require(worst_lin <= 1e-12, "total objective linearity");
    return o;
}

Outcome shapes()
{
    Outcome o;
    auto weighted = [](const Architecture& a) {
        const auto s = infer_shapes(a);
        std::vector<Shape> out;
        for (std::size_t i = 0; i < a.layers.size(); ++i) {
            if (a.layers[i].kind == LayerKind::Conv || a.layers[i].kind == LayerKind::TransConv) {
                out.push_back(s[i]);
            }
        }
        return out;
    };
    // Reference tables at base width b and input size 4 * 64.
    auto trunk = [](int b, int head) {
        return std::vector<Shape>{{b, 128, 128},  {2 * b, 64, 64}, {4 * b, 32, 32}, {8 * b, 16, 16},
                                  {16 * b, 8, 8}, {16 * b, 4, 4},  {16 * b, 2, 2},  {16 * b, 1, 1},
                                  {16 * b, 2, 2}, {16 * b, 4, 4},  {16 * b, 8, 8},  {8 * b, 16, 16},
                                  {4 * b, 32, 32}, {2 * b, 64, 64}, {b, 128, 128},  {head, 256, 256}};
    };
    const int b = NetScale{1}.base_width();
    o.require(weighted(describe_flownet(b, 256)) == trunk(64, 2), "FlowNet table");
    o.require(weighted(describe_lightnet(b, 256)) == trunk(64, 3), "LightNet table");
    o.require(weighted(describe_recnet(b, 256, 1)) == trunk(64, 3), "RecNet table");
    o.require(tap_shape(describe_recnet(b, 256, 1)) == Shape{64, 128, 128}, "decoder tap");
    o.require(weighted(describe_global_discriminator(b, 256)) ==
                  std::vector<Shape>{{64, 128, 128}, {128, 64, 64}, {256, 32, 32}, {512, 31, 31}, {1, 30, 30}},
              "global discriminator table");
    o.require(weighted(describe_part_discriminator(b, 128)) ==
                  std::vector<Shape>{{64, 64, 64}, {128, 32, 32}, {256, 31, 31}, {1, 30, 30}},
              "part discriminator table");

    // Desk scale: real forward passes agree with the inferred shapes.
    const NetScale desk = NetScale::from_fraction(0.125);
    const int d = desk.base_width();
    const auto x6 = cst(Tensor<float>(Shape{6, 64, 64}, 0.5f));
    const auto x3 = cst(Tensor<float>(Shape{3, 64, 64}, 0.5f));
    const auto flow = build_flownet<float>(desk, 64);
    const auto light = build_lightnet<float>(desk, 64);
    const auto rec = build_recnet<float>(desk, 64, 1);
    const auto global = build_global_discriminator<float>(desk, 64);
    const auto part = build_part_discriminator<float>(desk, 32);
    o.require(forward(flow, x6).output.shape() == output_shape(flow.arch), "desk FlowNet forward");
    o.require(output_shape(flow.arch) == Shape{2, 64, 64}, "desk FlowNet shape");
    const auto light_in = cst(Tensor<float>(Shape{light.arch.in_channels, 64, 64}, 0.5f));
    o.require(forward(light, light_in).output.shape() == Shape{3, 64, 64}, "desk LightNet forward");
    const auto rec_in = cst(Tensor<float>(Shape{rec.arch.in_channels, 64, 64}, 0.5f));
    const auto r = forward(rec, rec_in);
    o.require(r.output.shape() == Shape{3, 64, 64}, "desk RecNet forward");
    o.require(r.tap.shape() == Shape{d, 32, 32} && tap_shape(rec.arch) == Shape{d, 32, 32}, "desk tap");
    o.require(forward(global, x3).output.shape() == Shape{1, 6, 6}, "desk global discriminator");
    o.require(forward(part, cst(Tensor<float>(Shape{3, 32, 32}, 0.5f))).output.shape() == Shape{1, 6, 6},
              "desk part discriminator");
    const auto desk_rec = weighted(describe_recnet(d, 64, 1));
    o.require(desk_rec.front() == Shape{d, 32, 32} && desk_rec.back() == Shape{3, 64, 64}, "desk RecNet table");
    return o;
}

Outcome oracle_warp()
{
    Outcome o;
    double worst_rec = 0.0, worst_lm = 0.0;
    int sheared = 0;
    for (std::uint64_t k = 0; sheared < 50; ++k) {
        const std::uint64_t seed = split_seed(Split::Test, 5000 + k);
        Asymmetry asym = random_asymmetry(seed);
        if (asym.shear == 0.0) {
            continue;
        }
        ++sheared;
        const auto s = generate_face(seed, 64, asym);
        const auto flow = cst(s.mirror_flow.cast<double>());
        const auto unlit = cst(s.unlit.cast<double>());
        const auto rec = bilinear_warp(flip_horizontal(unlit), flow);
        worst_rec = std::max(worst_rec, max_abs_diff(rec.value(), unlit.value()));
        worst_lm = std::max(worst_lm, landmark_loss(flow, s.landmarks, flip_landmarks(s.landmarks, 64)).item());
    }
    note("max abs reconstruction error %.3g", worst_rec);
    note("max landmark loss %.3g", worst_lm);
    o.require(worst_rec <= 1e-3, "reconstruction error");
    o.require(worst_lm < 1e-3, "landmark loss");
    return o;
}

std::string bytes_of(const Trainer& t)
{
    return serialize_checkpoint(t.checkpoint_arrays());
}

struct RunResult {
    double seconds = 0.0;
    MetricReport eval;
    double lm_init = 0.0, lm_stage1 = 0.0;
    double tv_init = 0.0, tv_stage1 = 0.0;
    double min_d_early = 1e9;
    MetricReport stage2;
};

double mean_tv(const Model<float>& model, int n, int size)
{
    double acc = 0.0;
    for (int k = 0; k < n; ++k) {
        const HeldOutSample s = make_sample(Split::Validation, static_cast<std::uint64_t>(k), size, MaskKind::LeftEye);
        const auto out = run_pipeline(model, s.occluded, s.mask, {.warp_only = true});
        acc += tv_loss(out.flow).item();
    }
    return acc / n;
}

RunResult desk_run(TrainConfig cfg, const fs::path& dir, const char* tag)
{
    RunResult r;
    const auto t0 = Clock::now();
    Trainer t(cfg);
    if (!cfg.plain_recnet) {
        r.lm_init = mean_landmark_loss(t.state().model, 0, 50, cfg.input_size);
        r.tv_init = mean_tv(t.state().model, 50, cfg.input_size);
    }
    t.run(std::nullopt, [&](const LossReport& rep) {
        if (rep.stage == 3 && rep.step < 200) {
            r.min_d_early = std::min(r.min_d_early, rep.disc);
        }
        const TrainingState& s = t.state();
        if (s.step == 0 && !s.finished) {
            if (rep.stage == 1) {
                r.lm_stage1 = mean_landmark_loss(s.model, 0, 50, cfg.input_size);
                r.tv_stage1 = mean_tv(s.model, 50, cfg.input_size);
            }
            if (rep.stage == 2) {
                r.stage2 = eval_set(&s.model, 0, 100, MaskKind::LeftEye, cfg.input_size);
            }
            t.save(dir / (std::string(tag) + "_stage" + std::to_string(rep.stage) + ".symc"));
        }
    });
    r.seconds = seconds_since(t0);
    t.save(dir / (std::string(tag) + "_final.symc"));
    r.eval = eval_set(&t.state().model, 0, 100, MaskKind::LeftEye, cfg.input_size);
    std::printf("    %s run: %.0f s, hole PSNR %.3f dB (%.3f after stage 2), PSNR %.3f dB, SSIM %.4f\n", tag,
                r.seconds, r.eval.hole_psnr, r.stage2.hole_psnr, r.eval.psnr, r.eval.ssim);
    std::fflush(stdout);
    return r;
}

TrainConfig desk_config(std::uint64_t seed)
{
    TrainConfig c;
    c.scale = 0.125;
    c.input_size = 64;
    c.epochs = {3, 5, 10};
    c.samples_per_epoch = 2000;
    c.seed = seed;
    return c;
}

Outcome desk_training(const fs::path& dir)
{
    Outcome o;
    constexpr double budget = 30 * 60;
    const RunResult full = desk_run(desk_config(0), dir, "full");
    TrainConfig plain_cfg = desk_config(0);
    plain_cfg.plain_recnet = true;
    const RunResult plain = desk_run(plain_cfg, dir, "plain");

    const double lm_ratio = full.lm_stage1 / full.lm_init;
    std::printf("    (a) held-out landmark loss %.4g -> %.4g (ratio %.4f, need < 0.1)\n", full.lm_init, full.lm_stage1,
                lm_ratio);
    std::printf("        stage-1 TV %.4g at init, %.4g after (need after < init)\n", full.tv_init, full.tv_stage1);
    const double gray = full.eval.gray_hole_psnr;
    std::printf("    (b) hole PSNR: full %.3f, gray %.3f (margin %+.3f, need >= 3), plain %.3f (margin %+.3f, need >= 0.5)\n",
                full.eval.hole_psnr, gray, full.eval.hole_psnr - gray, plain.eval.hole_psnr,
                full.eval.hole_psnr - plain.eval.hole_psnr);
    std::printf("        lowest discriminator loss in the first 200 stage-3 steps %.4f (ln 2 = %.4f)\n", full.min_d_early,
                std::log(2.0));
    o.require(full.seconds < budget, "full run exceeded 30 min");
    o.require(plain.seconds < budget, "plain run exceeded 30 min");
    o.require(lm_ratio < 0.1, "(a) landmark ratio");
    o.require(full.tv_stage1 < full.tv_init, "(a) TV after stage 1");
    o.require(full.eval.hole_psnr - gray >= 3.0, "(b) margin over gray fill");
    o.require(full.eval.hole_psnr - plain.eval.hole_psnr >= 0.5, "(b) margin over plain RecNet");

    // (c) equal seeds reproduce a prefix that spans the stage-1/stage-2 boundary.
    TrainConfig c = desk_config(0);
    c.samples_per_epoch = 100;
    Trainer a(c), b(c);
    const long steps = c.stage_steps(1) + 100;
    a.run(steps);
    b.run(steps);
    const bool same = bytes_of(a) == bytes_of(b);
    std::printf("    (c) two runs of %ld steps with seed 0: %s\n", steps, same ? "identical bytes" : "bytes differ");
    o.require(same, "(c) bit-exact reruns");
    return o;
}

Outcome serialization(const fs::path& dir)
{
    Outcome o;
    TrainConfig c = desk_config(3);
    c.epochs = {1, 1, 3};
    c.samples_per_epoch = 20;  // 20 + 20 + 60 steps
    c.val_interval = 7;
    const long cut = 30, span = 50;

    Trainer full(c);
    std::vector<double> totals_full;
    full.run(cut + span, [&](const LossReport& r) { totals_full.push_back(r.total); });

    Trainer first(c);
    std::vector<double> totals;
    first.run(cut, [&](const LossReport& r) { totals.push_back(r.total); });
    const fs::path path = dir / "resume.symc";
    first.save(path);
    const std::string bytes = bytes_of(first);
    o.require(serialize_checkpoint(load_checkpoint(path)) == bytes, "file round trip");
    o.require(serialize_checkpoint(deserialize_checkpoint(bytes)) == bytes, "memory round trip");

    Trainer resumed = Trainer::resume(path);
    o.require(bytes_of(resumed) == bytes, "resumed state differs");
    resumed.run(span, [&](const LossReport& r) { totals.push_back(r.total); });
    o.require(totals == totals_full, "per-step totals differ");
    o.require(bytes_of(resumed) == bytes_of(full), "final checkpoints differ");
    std::printf("    resumed at step %ld (stage 2), compared %ld steps into stage 3\n", cut, span);
    return o;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Acceptance checks"};
    std::vector<int> only;
    std::string out = "acceptance_out";
    app.add_option("--only", only, "Run just these criteria (1-7)");
    app.add_option("--out", out, "Directory for training artifacts");
    CLI11_PARSE(app, argc, argv);
    const std::set<int> pick(only.begin(), only.end());
    fs::create_directories(out);

    struct Criterion {
        int id;
        const char* name;
        double limit;  // seconds, 0 for none
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria = {
        {1, "gradient suite", 120, gradients},
        {2, "mask partition suite", 30, mask_partition},
        {3, "zero-case suite", 10, zero_cases},
        {4, "shape conformance", 10, shapes},
        {5, "oracle warp", 0, oracle_warp},
        {6, "desk-scale training", 0, [&] { return desk_training(out); }},
        {7, "serialization and resume", 0, [&] { return serialization(out); }},
    };

    int failed = 0;
    for (const Criterion& c : criteria) {
        if (!pick.empty() && !pick.count(c.id)) {
            continue;
        }
        std::printf("[%d] %s\n", c.id, c.name);
        std::fflush(stdout);
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        const double secs = seconds_since(t0);
        if (c.limit > 0 && secs >= c.limit) {
            o.require(false, "runtime over " + std::to_string(static_cast<int>(c.limit)) + " s");
        }
        std::printf("%s  criterion %d: %s (%.1f s)%s%s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, secs,
                    o.detail.empty() ? "" : " -- ", o.detail.c_str());
        std::fflush(stdout);
        failed += o.pass ? 0 : 1;
    }
    return failed == 0 ? 0 : 1;
}
