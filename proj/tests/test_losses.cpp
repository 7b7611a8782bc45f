#include "doctest.h"

#include <cmath>

#include "mirrorfill/geometry.hpp"
#include "mirrorfill/losses.hpp"
#include "mirrorfill/synthdata.hpp"
#include "test_util.hpp"

using namespace mirrorfill;
using testutil::random_tensor;

namespace {

Var<double> cst(const Tensor<double>& t)
{
    return Var<double>::constant(t);
}

LandmarkSet one_point(double x, double y)
{
    LandmarkSet lm;
    lm.pts = {{x, y}};
    lm.flip_perm = {0};
    return lm;
}

// Extractor with a single 1x1 conv holding the identity, so features equal pixels.
Network<double> identity_extractor(int size)
{
    Architecture a;
    a.name = "ident";
    a.in_channels = 3;
    a.input_size = size;
    LayerSpec conv;
    conv.kind = LayerKind::Conv;
    conv.out_channels = 3;
    conv.kernel = 1;
    a.layers = {conv};
    Network<double> net = make_network<double>(a, 0);
    Tensor<double>& w = net.params[0].mutable_value();
    w.fill(0.0);
    for (int c = 0; c < 3; ++c) {
        w[c * 3 + c] = 1.0;
    }
    net.params[1].mutable_value().fill(0.0);
    net.set_trainable(false);
    return net;
}

}  // namespace

TEST_CASE("landmark loss examples")
{
    const int n = 8;
    const auto lm = one_point(3.0, 2.0);
    CHECK(landmark_loss(cst(identity_flow<double>(n, n)), lm, lm).item() < 1e-20);
    // Flow output (3, 4) px away from the target.
    Tensor<double> pix = denormalize_flow(identity_flow<double>(n, n), n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            pix.at(0, i, j) += 3.0;
            pix.at(1, i, j) += 4.0;
        }
    }
    CHECK(landmark_loss(cst(normalize_pixel_flow(pix, n, n)), lm, lm).item() == doctest::Approx(25.0));
    CHECK_THROWS_AS(landmark_loss(cst(identity_flow<double>(n, n)), lm, one_point(9.0, 2.0)), DomainError);
}

TEST_CASE("landmark loss on the generator's mirror flow")
{
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto s = generate_face(seed, 64, {0.0, 0.05});
        const auto v = landmark_loss(cst(s.mirror_flow.cast<double>()), s.landmarks, flip_landmarks(s.landmarks, 64));
        CHECK(v.item() < 1e-3);
    }
}

TEST_CASE("tv loss examples")
{
    CHECK(tv_loss(cst(Tensor<double>(Shape{2, 4, 4}, 0.3))).item() == 0.0);
    // x channel holds the pixel ramp j, y channel constant.
    Tensor<double> pix(Shape{2, 3, 3});
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            pix.at(0, i, j) = j;
        }
    }
    const auto flow = normalize_pixel_flow(pix, 3, 3);
    CHECK(tv_loss(cst(flow)).item() == doctest::Approx(6.0 / 36.0));
    const auto shifted = map(flow, [](double v) { return v + 0.25; });
    CHECK(tv_loss(cst(shifted)).item() == doctest::Approx(6.0 / 36.0));
}

TEST_CASE("perceptual symmetry loss examples")
{
    const auto f = random_tensor(Shape{4, 8, 8}, 1);
    const auto g = random_tensor(Shape{4, 8, 8}, 2);
    const auto id = identity_flow<double>(8, 8);
    const Tensor<double> full(Shape{1, 8, 8}, 1.0), none(Shape{1, 8, 8}, 0.0);
    CHECK(perceptual_symmetry_loss(cst(f), cst(f), cst(id), cst(full)).item() <= 1e-8);
    CHECK(perceptual_symmetry_loss(cst(f), cst(g), cst(id), cst(none)).item() == 0.0);

    // Two paths: warp first with an explicit loop, then the masked mean.
    const auto flow = normalize_pixel_flow(testutil::smooth_pixel_flow(8, 8, 3), 8, 8);
    const auto mask = random_tensor(Shape{1, 8, 8}, 4, 0.0, 1.0);
    const auto warped = bilinear_warp(cst(g), cst(flow)).value();
    double direct = 0.0;
    for (int c = 0; c < 4; ++c) {
        for (int i = 0; i < 8; ++i) {
            for (int j = 0; j < 8; ++j) {
                direct += std::pow((f.at(c, i, j) - warped.at(c, i, j)) * mask.at(0, i, j), 2);
            }
        }
    }
    direct /= 4.0 * 64.0;
    CHECK(std::abs(perceptual_symmetry_loss(cst(f), cst(g), cst(flow), cst(mask)).item() - direct) < 1e-10);
    CHECK_THROWS_AS(perceptual_symmetry_loss(cst(f), cst(g), cst(id), cst(Tensor<double>(Shape{1, 4, 4}))),
                    DimensionError);
}

TEST_CASE("l2, perceptual and reconstruction losses")
{
    const auto a = random_tensor(Shape{3, 32, 32}, 5, 0.0, 1.0);
    const auto b = random_tensor(Shape{3, 32, 32}, 6, 0.0, 1.0);
    CHECK(l2_loss(cst(a), cst(a)).item() == 0.0);
    CHECK(l2_loss(cst(a), cst(map(a, [](double v) { return v + 0.1; }))).item() == doctest::Approx(0.01));
    CHECK(l2_loss(cst(a), cst(b)).item() == l2_loss(cst(b), cst(a)).item());

    const auto ident = identity_extractor(32);
    CHECK(perceptual_loss(cst(a), cst(b), ident).item() == doctest::Approx(l2_loss(cst(a), cst(b)).item()).epsilon(1e-12));

    const auto psi = build_feature_extractor<double>(NetScale{8}, 32);
    CHECK(perceptual_loss(cst(a), cst(a), psi).item() == 0.0);
    CHECK(perceptual_loss(cst(a), cst(b), psi).item() == doctest::Approx(perceptual_loss(cst(b), cst(a), psi).item()));

    LossWeights w;
    CHECK(w.lambda_r2 == 300.0);
    CHECK(w.lambda_rp == 0.01);
    CHECK(reconstruction_loss(cst(a), cst(a), psi, w).item() == 0.0);
    w.lambda_r2 = 1.0;
    w.lambda_rp = 0.0;
    CHECK(reconstruction_loss(cst(a), cst(b), psi, w).item() == doctest::Approx(l2_loss(cst(a), cst(b)).item()));
}

TEST_CASE("adversarial losses")
{
    const Tensor<double> half(Shape{1, 6, 6}, 0.5);
    const auto pair = adversarial_losses(cst(half), cst(half));
    CHECK(pair.d_loss.item() == doctest::Approx(std::log(2.0)));
    CHECK(pair.g_loss.item() == doctest::Approx(std::log(2.0)));
    const auto perfect = adversarial_losses(cst(Tensor<double>(Shape{1, 6, 6}, 1.0)), cst(Tensor<double>(Shape{1, 6, 6}, 1e-7)));
    CHECK(perfect.d_loss.item() < 1e-6);
    CHECK_THROWS_AS(discriminator_loss(cst(Tensor<double>(Shape{1, 2, 2}, 1.5)), cst(half)), NumericError);

    LossWeights w;
    CHECK(w.lambda_ag == 100.0);
    CHECK(w.lambda_ap == std::array<double, 4>{100.0, 100.0, 80.0, 80.0});
    const auto one = cst(Tensor<double>::scalar(1.0));
    CHECK(combine_adversarial(one, {one, one, one, one}, w).item() == doctest::Approx(460.0));
}

TEST_CASE("total objective")
{
    LossWeights w;
    CHECK(w.lambda_s == 50.0);
    CHECK(w.lambda_l == 100.0);
    CHECK(w.lambda_lm == 10.0);
    CHECK(w.lambda_tv == 1.0);
    auto s = [](double v) { return cst(Tensor<double>::scalar(v)); };
    LossTerms<double> zero{s(0), s(0), s(0), s(0), s(0), s(0)};
    CHECK(total_loss(zero, w).report.total == 0.0);

    LossTerms<double> t{s(0.7), s(1.3), s(0.02), s(0.004), s(2.5), s(0.6)};
    LossWeights only_lm{0, 0, 0, {0, 0, 0, 0}, 0, 0, 1.0, 0};
    CHECK(total_loss(t, only_lm).report.total == 0.7 + 1.3 + 2.5);  // rec and adv arrive pre-weighted
    t.rec = s(0);
    t.adv = s(0);
    CHECK(total_loss(t, only_lm).report.total == 2.5);

    // Linear in each weight.
    t = {s(0.7), s(1.3), s(0.02), s(0.004), s(2.5), s(0.6)};
    const double base = total_loss(t, w).report.total;
    for (double LossWeights::*field : {&LossWeights::lambda_s, &LossWeights::lambda_l, &LossWeights::lambda_lm,
                                       &LossWeights::lambda_tv}) {
        LossWeights w1 = w, w2 = w;
        w1.*field += 1.0;
        w2.*field += 2.0;
        const double d1 = total_loss(t, w1).report.total - base;
        const double d2 = total_loss(t, w2).report.total - base;
        CHECK(d2 == doctest::Approx(2.0 * d1));
    }
    const auto obj = total_loss(t, w);
    const auto& r = obj.report;
    const double sum = r.rec + r.adv + 50 * r.sym + 100 * r.illum + 10 * r.landmark + r.tv;
    CHECK(std::abs(r.total - sum) <= 1e-9 * std::abs(sum));
    CHECK(obj.total.item() == doctest::Approx(r.total).epsilon(1e-12));
}

TEST_CASE("loss gradients")
{
    const int n = 6;
    GradCheckOptions o;
    SUBCASE("landmark")
    {
        LandmarkSet lm;
        lm.pts = {{1.3, 2.6}, {3.4, 1.2}};
        lm.flip_perm = {1, 0};
        const auto r = grad_check(
            [&](const std::vector<Var<double>>& v) { return landmark_loss(v[0], lm, flip_landmarks(lm, n)); },
            {random_tensor(Shape{2, n, n}, 7, -0.9, 0.9)}, o);
        CHECK(r.max_rel_error < 1e-4);
    }
    SUBCASE("tv")
    {
        const auto r = grad_check([](const std::vector<Var<double>>& v) { return tv_loss(v[0]); },
                                  {random_tensor(Shape{2, n, n}, 8)}, o);
        CHECK(r.max_rel_error < 1e-4);
    }
    SUBCASE("perceptual symmetry")
    {
        const auto flow = normalize_pixel_flow(testutil::smooth_pixel_flow(n, n, 9), n, n);
        const auto r = grad_check(
            [](const std::vector<Var<double>>& v) { return perceptual_symmetry_loss(v[0], v[1], v[2], v[3]); },
            {random_tensor(Shape{3, n, n}, 10), random_tensor(Shape{3, n, n}, 11), flow,
             random_tensor(Shape{1, n, n}, 12, 0.0, 1.0)},
            o);
        CHECK(r.max_rel_error < 1e-4);
    }
    SUBCASE("l2 and perceptual")
    {
        const auto psi = build_feature_extractor<double>(NetScale{8}, 32);
        o.max_coords_per_input = 60;
        const auto r = grad_check(
            [&](const std::vector<Var<double>>& v) { return ag::add(l2_loss(v[0], v[1]), perceptual_loss(v[0], v[1], psi)); },
            {random_tensor(Shape{3, 32, 32}, 13, 0.0, 1.0), random_tensor(Shape{3, 32, 32}, 14, 0.0, 1.0)}, o);
        CHECK(r.max_rel_error < 1e-4);
    }
    SUBCASE("adversarial")
    {
        const auto r = grad_check(
            [](const std::vector<Var<double>>& v) {
                return ag::add(discriminator_loss(v[0], v[1]), generator_adversarial_loss(v[1]));
            },
            {random_tensor(Shape{1, 3, 3}, 15, 0.1, 0.9), random_tensor(Shape{1, 3, 3}, 16, 0.1, 0.9)}, o);
        CHECK(r.max_rel_error < 1e-4);
    }
}

TEST_CASE("csv rows")
{
    LossReport r;
    r.step = 12;
    r.stage = 2;
    r.rec = 0.5;
    r.total = 0.5;
    CHECK(loss_csv_header() == "step,stage,rec,adv,sym,illum,landmark,tv,disc,total");
    CHECK(loss_csv_row(r) == "12,2,0.5,0,0,0,0,0,0,0.5");
}
