#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "json.hpp"
#include "mirrorfill/checkpoint.hpp"
#include "mirrorfill/geometry.hpp"
#include "mirrorfill/image_io.hpp"

namespace fs = std::filesystem;
using namespace mirrorfill;

namespace {

const fs::path kWork = fs::temp_directory_path() / "mirrorfill_cli_test";

struct Run {
    int code = -1;
    std::string out;
};

Run cli(const std::string& args)
{
    const fs::path log = kWork / "stdout.txt";
    const std::string cmd = std::string(MIRRORFILL_CLI) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream is(log);
    std::stringstream ss;
    ss << is.rdbuf();
    r.out = ss.str();
    return r;
}

std::string slurp(const fs::path& p)
{
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

struct Workdir {
    Workdir()
    {
        fs::remove_all(kWork);
        fs::create_directories(kWork);
    }
    ~Workdir() { fs::remove_all(kWork); }
};

std::string tiny_config()
{
    const fs::path cfg = kWork / "tiny.cfg";
    std::ofstream(cfg) << "input_size = 32\nepochs_stage1 = 1\nepochs_stage2 = 1\nepochs_stage3 = 1\n"
                          "samples_per_epoch = 3\nval_samples = 1\nval_interval = 2\nseed = 5\n";
    return cfg.string();
}

}  // namespace

TEST_CASE("synth writes images, masks and landmarks")
{
    Workdir w;
    const fs::path dir = kWork / "synth";
    const Run r = cli("synth --count 2 --seed 7 --out " + dir.string());
    REQUIRE(r.code == 0);
    for (const char* stem : {"face_7", "face_8"}) {
        for (const char* part : {"_image.png", "_mask.png", "_occluded.png", "_landmarks.txt"}) {
            CHECK(fs::exists(dir / (std::string(stem) + part)));
        }
    }
    const Tensor<float> img = read_png(dir / "face_7_image.png");
    CHECK(img.shape() == Shape{3, 64, 64});
    const Tensor<float> mask = read_mask(dir / "face_7_mask.png");
    CHECK(mask.min_value() == 0.0f);
    CHECK(mask.max_value() == 1.0f);

    std::ifstream lm(dir / "face_7_landmarks.txt");
    int lines = 0, idx;
    double x, y;
    while (lm >> idx >> x >> y) {
        CHECK(idx == lines);
        CHECK(x >= 0.0);
        CHECK(x <= 63.0);
        ++lines;
    }
    CHECK(lines == 10);

    // Same seed, same bytes.
    const fs::path again = kWork / "again";
    REQUIRE(cli("synth --count 1 --seed 7 --out " + again.string()).code == 0);
    CHECK(slurp(again / "face_7_image.png") == slurp(dir / "face_7_image.png"));
}

TEST_CASE("train, complete and eval round trip")
{
    Workdir w;
    const fs::path run = kWork / "run";
    const Run t = cli("train --config " + tiny_config() + " --out " + run.string());
    REQUIRE_MESSAGE(t.code == 0, t.out);
    CHECK(t.out.find("final.symc") != std::string::npos);
    for (const char* f : {"stage1.symc", "stage2.symc", "final.symc", "loss.csv"}) {
        CHECK(fs::exists(run / f));
    }
    std::ifstream csv(run / "loss.csv");
    std::string line;
    int rows = 0;
    std::getline(csv, line);
    CHECK(line.find("stage") != std::string::npos);
    while (std::getline(csv, line)) {
        ++rows;
    }
    CHECK(rows == 9);

    // Resume the stage-1 checkpoint to the end: same final weights.
    const fs::path resumed = kWork / "resumed";
    REQUIRE(cli("train --checkpoint " + (run / "stage1.symc").string() + " --out " + resumed.string()).code == 0);
    CHECK(slurp(resumed / "final.symc") == slurp(run / "final.symc"));

    const fs::path faces = kWork / "faces";
    REQUIRE(cli("synth --count 1 --seed 3 --size 32 --out " + faces.string()).code == 0);
    const fs::path out = kWork / "done";
    const std::string complete = "complete --checkpoint " + (run / "final.symc").string() + " --image " +
                                 (faces / "face_3_image.png").string() + " --mask " +
                                 (faces / "face_3_mask.png").string() + " --out " + out.string();
    const Run c = cli(complete + " --debug");
    REQUIRE_MESSAGE(c.code == 0, c.out);
    for (const char* f : {"completed.png", "stage1.png", "mask_s1.png", "mask_s2.png", "warped.png", "ratio.png",
                          "flow.sflw", "completed_raw.png"}) {
        CHECK(fs::exists(out / f));
    }
    CHECK(read_flow_raw(out / "flow.sflw").shape() == Shape{2, 32, 32});

    // Known pixels come back untouched.
    const Tensor<float> image = read_png(faces / "face_3_image.png");
    const Tensor<float> mask = read_mask(faces / "face_3_mask.png");
    const Tensor<float> done = read_png(out / "completed.png");
    for (int ch = 0; ch < 3; ++ch) {
        for (int i = 0; i < 32; ++i) {
            for (int j = 0; j < 32; ++j) {
                if (mask.at(0, i, j) == 1.0f) {
                    REQUIRE(done.at(ch, i, j) == image.at(ch, i, j));
                }
            }
        }
    }

    const fs::path json = kWork / "eval.json";
    const Run e = cli("eval --checkpoint " + (run / "final.symc").string() + " --count 3 --json " + json.string());
    REQUIRE_MESSAGE(e.code == 0, e.out);
    CHECK(e.out.find("hole_psnr") != std::string::npos);
    const auto j = nlohmann::json::parse(slurp(json));
    CHECK(j["samples"] == 3);
    CHECK(j["per_image_psnr"].size() == 3);
    CHECK(j["psnr"].get<double>() > 0.0);
}

TEST_CASE("eval without a checkpoint scores the ground truth")
{
    Workdir w;
    const Run e = cli("eval --count 2");
    REQUIRE(e.code == 0);
    CHECK(e.out.find("psnr 100.0000") != std::string::npos);
}

TEST_CASE("max-steps stops early and resumes")
{
    Workdir w;
    const fs::path run = kWork / "partial";
    REQUIRE(cli("train --config " + tiny_config() + " --max-steps 4 --out " + run.string()).code == 0);
    CHECK(fs::exists(run / "last.symc"));
    CHECK_FALSE(fs::exists(run / "final.symc"));
    REQUIRE(cli("train --checkpoint " + (run / "last.symc").string() + " --out " + run.string()).code == 0);
    CHECK(fs::exists(run / "final.symc"));

    const fs::path whole = kWork / "whole";
    REQUIRE(cli("train --config " + tiny_config() + " --out " + whole.string()).code == 0);
    CHECK(slurp(run / "final.symc") == slurp(whole / "final.symc"));
    CHECK(slurp(run / "loss.csv") == slurp(whole / "loss.csv"));
}

TEST_CASE("gradcheck for one seed")
{
    Workdir w;
    const Run r = cli("gradcheck --seed 2");
    CHECK(r.code == 0);
    CHECK(r.out.find("FAIL") == std::string::npos);
    CHECK(r.out.find("seed 2") != std::string::npos);
}

TEST_CASE("exit codes")
{
    Workdir w;
    CHECK(cli("").code == 2);
    CHECK(cli("synth --mask nose").code == 2);
    CHECK(cli("synth --size 48").code == 2);
    CHECK(cli("complete --image a.png --mask b.png").code == 2);
    CHECK(cli("eval --checkpoint " + (kWork / "missing.symc").string()).code == 2);

    std::ofstream(kWork / "junk.symc") << "not a checkpoint";
    const Run bad = cli("train --checkpoint " + (kWork / "junk.symc").string() + " --out " + kWork.string());
    CHECK(bad.code == 2);
    CHECK(bad.out.find("error") != std::string::npos);

    std::ofstream(kWork / "bad.cfg") << "scale = 0.3\n";
    CHECK(cli("train --config " + (kWork / "bad.cfg").string() + " --out " + kWork.string()).code == 2);

    std::ofstream(kWork / "nan.cfg") << "input_size = 32\nlambda_l = nan\n";
    CHECK(cli("train --config " + (kWork / "nan.cfg").string() + " --out " + kWork.string()).code == 2);

    // A NaN weight in a checkpoint trips the numeric guard.
    const fs::path run = kWork / "nan_run";
    REQUIRE(cli("train --config " + tiny_config() + " --max-steps 1 --out " + run.string()).code == 0);
    auto arrays = load_checkpoint(run / "last.symc");
    bool poisoned = false;
    for (NamedArray& a : arrays) {
        if (!poisoned && a.name.rfind("flow", 0) == 0) {
            a.data[0] = std::numeric_limits<float>::quiet_NaN();
            poisoned = true;
        }
    }
    REQUIRE(poisoned);
    save_checkpoint(run / "nan.symc", arrays);
    const Run nan = cli("train --checkpoint " + (run / "nan.symc").string() + " --out " + run.string());
    CHECK(nan.code == 3);
    CHECK(nan.out.find("numeric") != std::string::npos);
}
