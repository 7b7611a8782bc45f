#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "mirrorfill/gradsuite.hpp"
#include "mirrorfill/illumination.hpp"
#include "mirrorfill/image_io.hpp"
#include "mirrorfill/metrics.hpp"
#include "mirrorfill/trainer.hpp"

namespace fs = std::filesystem;
using namespace mirrorfill;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string checkpoint;
    std::string out = ".";
    bool debug = false;
};

void add_common(CLI::App* app, Common& c)
{
    app->add_option("--config", c.config, "Training config file (key = value)");
    app->add_option("--seed", c.seed, "Random seed");
    app->add_option("--checkpoint", c.checkpoint, "SYMC checkpoint");
    app->add_option("--out", c.out, "Output directory");
    app->add_flag("--debug", c.debug, "Write intermediate results");
}

fs::path out_dir(const Common& c)
{
    fs::create_directories(c.out);
    return c.out;
}

MaskKind parse_mask_kind(const std::string& s)
{
    if (s == "left-eye") {
        return MaskKind::LeftEye;
    }
    if (s == "random") {
        return MaskKind::Random;
    }
    throw ValidationError("unknown mask kind '" + s + "' (left-eye or random)");
}

void write_landmarks(const fs::path& path, const LandmarkSet& lm)
{
    std::ofstream os(path);
    os.precision(9);
    for (std::size_t i = 0; i < lm.pts.size(); ++i) {
        os << i << ' ' << lm.pts[i].first << ' ' << lm.pts[i].second << '\n';
    }
}

int run_synth(const Common& c, int count, int size, const std::string& mask_kind)
{
    const MaskKind kind = parse_mask_kind(mask_kind);
    validate_input_size(size);
    if (count < 1) {
        throw ValidationError("--count must be >= 1");
    }
    const fs::path dir = out_dir(c);
    const std::uint64_t first = c.seed.value_or(0);
    for (int k = 0; k < count; ++k) {
        const std::uint64_t seed = first + static_cast<std::uint64_t>(k);
        const SyntheticFaceSample face = generate_face(seed, size, random_asymmetry(seed));
        const Tensor<float> mask = kind == MaskKind::LeftEye ? left_eye_hole_mask(face) : random_training_mask(seed, face);
        const std::string stem = "face_" + std::to_string(seed);
        write_png(dir / (stem + "_image.png"), face.image);
        write_png(dir / (stem + "_mask.png"), mask);
        write_png(dir / (stem + "_occluded.png"), apply_occlusion(face.image, mask));
        write_landmarks(dir / (stem + "_landmarks.txt"), face.landmarks);
    }
    std::cout << "wrote " << count << " samples to " << dir.string() << '\n';
    return 0;
}

int run_train(const Common& c, std::optional<long> max_steps)
{
    const fs::path dir = out_dir(c);
    std::optional<Trainer> trainer;
    if (!c.checkpoint.empty()) {
        trainer.emplace(Trainer::resume(c.checkpoint));
    } else {
        TrainConfig cfg = c.config.empty() ? TrainConfig{} : load_train_config(c.config);
        if (c.seed) {
            cfg.seed = *c.seed;
        }
        trainer.emplace(cfg);
    }
    Trainer& t = *trainer;
    const fs::path log_path = dir / "loss.csv";
    const bool fresh = !fs::exists(log_path) || c.checkpoint.empty();
    std::ofstream log(log_path, fresh ? std::ios::trunc : std::ios::app);
    if (fresh) {
        log << loss_csv_header() << '\n';
    }
    const int interval = t.config().checkpoint_interval;
    t.run(max_steps, [&](const LossReport& r) {
        log << loss_csv_row(r) << '\n';
        const TrainingState& s = t.state();
        if (s.finished) {
            return;
        }
        if (s.step == 0) {
            // The stage just ended.
            t.save(dir / ("stage" + std::to_string(r.stage) + ".symc"));
        } else if (interval > 0 && s.step % interval == 0) {
            t.save(dir / ("stage" + std::to_string(s.stage) + "_step" + std::to_string(s.step) + ".symc"));
        }
        if (c.debug && s.step % 100 == 0) {
            std::cerr << "stage " << r.stage << " step " << r.step << " total " << r.total << '\n';
        }
    });
    const fs::path final_path = dir / (t.state().finished ? "final.symc" : "last.symc");
    t.save(final_path);
    if (t.state().rejected_steps > 0) {
        std::cerr << "rejected " << t.state().rejected_steps << " steps with non-finite gradients\n";
    }
    std::cout << final_path.string() << '\n';
    return 0;
}

int run_complete(const Common& c, const std::string& image_path, const std::string& mask_path, bool preserve)
{
    if (c.checkpoint.empty()) {
        throw ValidationError("complete needs --checkpoint");
    }
    const Model<float> model = load_model(c.checkpoint);
    const Tensor<float> image = read_png(image_path);
    const Tensor<float> mask = read_mask(mask_path);
    if (mask.height() != image.height() || mask.width() != image.width()) {
        throw DimensionError("mask size does not match the image");
    }
    const Tensor<float> occluded = apply_occlusion(image, mask);
    PipelineOutput<float> inter;
    const Tensor<float> result = complete_image(model, occluded, mask, preserve, &inter);
    const fs::path dir = out_dir(c);
    write_png(dir / "completed.png", result);
    if (c.debug) {
        write_png(dir / "occluded.png", occluded);
        write_png(dir / "completed_raw.png", inter.completed.value());
        write_png(dir / "stage1.png", inter.stage1.value());
        write_png(dir / "mask.png", mask);
        write_png(dir / "mask_s1.png", inter.s1.value());
        write_png(dir / "mask_s2.png", inter.s2.value());
        if (!model.plain) {
            write_flow_raw(dir / "flow.sflw", inter.flow.value());
            write_png(dir / "warped.png", inter.warped.value());
            write_png(dir / "ratio.png", ratio_false_color(inter.ratio.value()));
            write_png(dir / "mask_warp.png", inter.m_warp.value());
        }
    }
    std::cout << (dir / "completed.png").string() << '\n';
    return 0;
}

int run_eval(const Common& c, std::uint64_t first, std::uint64_t count, const std::string& mask_kind, bool preserve,
             const std::string& json_path)
{
    const MaskKind kind = parse_mask_kind(mask_kind);
    std::optional<Model<float>> model;
    int size = 64;
    if (!c.checkpoint.empty()) {
        TrainConfig cfg;
        model.emplace(load_model(c.checkpoint, &cfg));
        size = cfg.input_size;
    }
    const MetricReport r = eval_set(model ? &*model : nullptr, first, count, kind, size, preserve);
    std::printf("samples %zu\npsnr %.4f\nssim %.5f\nhole_psnr %.4f\ngray_psnr %.4f\ngray_hole_psnr %.4f\n", r.count,
                r.psnr, r.ssim, r.hole_psnr, r.gray_psnr, r.gray_hole_psnr);
    if (!json_path.empty()) {
        nlohmann::json j = {{"samples", r.count},
                            {"first", first},
                            {"mask", mask_kind},
                            {"psnr", r.psnr},
                            {"ssim", r.ssim},
                            {"hole_psnr", r.hole_psnr},
                            {"gray_psnr", r.gray_psnr},
                            {"gray_hole_psnr", r.gray_hole_psnr},
                            {"per_image_psnr", r.per_image_psnr},
                            {"per_image_hole_psnr", r.per_image_hole_psnr}};
        std::ofstream(json_path) << j.dump(2) << '\n';
    }
    return 0;
}

int run_gradcheck(const Common& c)
{
    bool ok = true;
    const std::uint64_t first = c.seed.value_or(0);
    const std::uint64_t last = c.seed ? first : 4;
    for (std::uint64_t seed = first; seed <= last; ++seed) {
        for (const GradSuiteEntry& e : run_gradient_suite(seed)) {
            std::printf("seed %llu  %-30s rel err %.3e  (tol %.0e)  %s\n", static_cast<unsigned long long>(seed),
                        e.name.c_str(), e.max_rel_error, e.tolerance, e.passed() ? "ok" : "FAIL");
            ok = ok && e.passed();
        }
    }
    if (!ok) {
        throw NumericError("gradient check failed");
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Symmetry-consistent face completion"};
    app.require_subcommand(1);
    Common common;

    int count = 1, size = 64;
    std::string mask_kind = "left-eye";
    auto* synth = app.add_subcommand("synth", "Write synthetic faces, masks and landmarks");
    add_common(synth, common);
    synth->add_option("--count", count, "Number of samples");
    synth->add_option("--size", size, "Image size");
    synth->add_option("--mask", mask_kind, "left-eye or random");

    std::optional<long> max_steps;
    auto* train = app.add_subcommand("train", "Run the three-stage schedule");
    add_common(train, common);
    train->add_option("--max-steps", max_steps, "Stop after this many steps");

    std::string image, mask;
    bool preserve = true;
    auto* complete = app.add_subcommand("complete", "Complete an occluded face");
    add_common(complete, common);
    complete->add_option("--image", image, "Input PNG")->required();
    complete->add_option("--mask", mask, "Mask PNG, white = known")->required();
    complete->add_flag("--preserve-known,!--no-preserve-known", preserve, "Copy known pixels back (default on)");

    std::uint64_t first = 0, eval_count = 100;
    auto* eval = app.add_subcommand("eval", "PSNR/SSIM on held-out synthetic faces");
    add_common(eval, common);
    eval->add_option("--first", first, "First test-split index");
    eval->add_option("--count", eval_count, "Number of samples");
    eval->add_option("--mask", mask_kind, "left-eye or random");
    eval->add_flag("--preserve-known,!--no-preserve-known", preserve, "Copy known pixels back (default on)");
    std::string json_path;
    eval->add_option("--json", json_path, "Also write the report as JSON");

    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
    add_common(gradcheck, common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (synth->parsed()) {
            return run_synth(common, count, size, mask_kind);
        }
        if (train->parsed()) {
            return run_train(common, max_steps);
        }
        if (complete->parsed()) {
            return run_complete(common, image, mask, preserve);
        }
        if (eval->parsed()) {
            return run_eval(common, first, eval_count, mask_kind, preserve, json_path);
        }
        return run_gradcheck(common);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return 3;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
