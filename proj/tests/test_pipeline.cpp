#include "doctest.h"

#include "mirrorfill/metrics.hpp"
#include "mirrorfill/pipeline.hpp"

using namespace mirrorfill;

namespace {

Model<float> desk_model(bool plain = false)
{
    return build_model<float>(NetScale{8}, 64, 1, plain, 3);
}

}  // namespace

TEST_CASE("full mask keeps the occluded image through stage 1")
{
    const Model<float> m = desk_model();
    const auto s = make_sample(Split::Test, 0, 64, MaskKind::LeftEye);
    const Tensor<float> ones(Shape{1, 64, 64}, 1.0f);
    const auto out = run_pipeline(m, s.face.image, ones);
    CHECK(out.stage1.value() == s.face.image);
    CHECK(out.s1.value().max_value() == 0.0f);
    CHECK(out.s2.value().max_value() == 0.0f);
    CHECK(complete_image(m, s.face.image, ones, true) == s.face.image);
}

TEST_CASE("stage 1 only changes the hole")
{
    const Model<float> m = desk_model();
    const auto s = make_sample(Split::Test, 1, 64, MaskKind::LeftEye);
    const auto out = run_pipeline(m, s.occluded, s.mask, PipelineOptions{false, 0, true, false});
    CHECK_FALSE(out.completed.defined());
    const auto& st1 = out.stage1.value();
    for (int c = 0; c < 3; ++c) {
        for (int i = 0; i < 64; ++i) {
            for (int j = 0; j < 64; ++j) {
                if (s.mask.at(0, i, j) == 1.0f) {
                    CHECK(st1.at(c, i, j) == s.occluded.at(c, i, j));
                }
            }
        }
    }
}

TEST_CASE("completion is deterministic and respects the preserve flag")
{
    const Model<float> m = desk_model();
    const auto s = make_sample(Split::Test, 2, 64, MaskKind::Random);
    PipelineOutput<float> inter;
    const auto a = complete_image(m, s.occluded, s.mask, true, &inter);
    const auto b = complete_image(m, s.occluded, s.mask, true);
    CHECK(a == b);
    const auto raw = complete_image(m, s.occluded, s.mask, false);
    CHECK(raw == inter.completed.value());
    CHECK(raw.min_value() > 0.0f);
    CHECK(raw.max_value() < 1.0f);
    for (int i = 0; i < 64; ++i) {
        for (int j = 0; j < 64; ++j) {
            const bool known = s.mask.at(0, i, j) == 1.0f;
            CHECK(a.at(1, i, j) == (known ? s.occluded.at(1, i, j) : raw.at(1, i, j)));
        }
    }
    CHECK(inter.flow.shape() == Shape{2, 64, 64});
    CHECK(inter.ratio.shape() == Shape{3, 64, 64});
}

TEST_CASE("plain model skips warping")
{
    const Model<float> m = desk_model(true);
    CHECK(m.nets().size() == 1);
    const auto s = make_sample(Split::Test, 3, 64, MaskKind::LeftEye);
    const auto out = run_pipeline(m, s.occluded, s.mask);
    CHECK(out.stage1.value() == s.occluded);
    CHECK_FALSE(out.flow.defined());
    for (std::size_t i = 0; i < s.mask.size(); ++i) {
        CHECK(out.s2.value()[i] == 1.0f - s.mask[i]);
    }
}

TEST_CASE("size errors name the expected size")
{
    const Model<float> m = desk_model();
    try {
        run_pipeline(m, Tensor<float>(Shape{3, 32, 32}), Tensor<float>(Shape{1, 32, 32}, 1.0f));
        FAIL("no error");
    } catch (const DimensionError& e) {
        CHECK(std::string(e.what()).find("64x64") != std::string::npos);
    }
    CHECK_THROWS_AS(run_pipeline(m, Tensor<float>(Shape{3, 64, 64}), Tensor<float>(Shape{1, 64, 64}, 0.5f)),
                    ValidationError);
}

TEST_CASE("evaluation sets")
{
    const auto truth = eval_set(nullptr, 0, 5, MaskKind::LeftEye, 64);
    CHECK(truth.psnr == 100.0);
    CHECK(truth.hole_psnr == 100.0);
    CHECK(truth.ssim == doctest::Approx(1.0));
    CHECK(truth.gray_hole_psnr < 30.0);
    CHECK(truth.per_image_psnr.size() == 5);

    const Model<float> m = desk_model();
    const auto a = eval_set(&m, 0, 3, MaskKind::LeftEye, 64);
    const auto b = eval_set(&m, 0, 3, MaskKind::LeftEye, 64);
    CHECK(a.per_image_hole_psnr == b.per_image_hole_psnr);
    CHECK(a.ssim == b.ssim);
    CHECK(a.gray_hole_psnr == eval_set(nullptr, 0, 3, MaskKind::LeftEye, 64).gray_hole_psnr);
    CHECK_THROWS_AS(eval_set(&m, 0, 0, MaskKind::LeftEye, 64), ValidationError);
    CHECK(mean_landmark_loss(m, 0, 2, 64) > 0.0);
    CHECK_THROWS_AS(mean_landmark_loss(desk_model(true), 0, 2, 64), ValidationError);
}
