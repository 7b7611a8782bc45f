#include "doctest.h"

#include <cmath>
#include <queue>

#include "mirrorfill/geometry.hpp"
#include "mirrorfill/masking.hpp"
#include "mirrorfill/strokes.hpp"
#include "mirrorfill/synthdata.hpp"
#include "test_util.hpp"

using namespace mirrorfill;

namespace {

Var<double> cst(const Tensor<double>& t)
{
    return Var<double>::constant(t);
}

std::size_t count_zeros(const Tensor<float>& m)
{
    std::size_t n = 0;
    for (float v : m.vec()) {
        n += v == 0.0f;
    }
    return n;
}

// Flood fill over 4-neighbours from the first set pixel; true if it reaches all.
bool four_connected(const Tensor<float>& hole)
{
    const int h = hole.height(), w = hole.width();
    std::vector<char> seen(hole.size(), 0);
    std::size_t total = 0, start = hole.size();
    for (std::size_t i = 0; i < hole.size(); ++i) {
        if (hole[i] > 0.0f) {
            ++total;
            start = std::min(start, i);
        }
    }
    if (total == 0) {
        return true;
    }
    std::queue<std::size_t> q;
    q.push(start);
    seen[start] = 1;
    std::size_t reached = 0;
    while (!q.empty()) {
        const std::size_t k = q.front();
        q.pop();
        ++reached;
        const int i = static_cast<int>(k) / w, j = static_cast<int>(k) % w;
        const int di[] = {1, -1, 0, 0}, dj[] = {0, 0, 1, -1};
        for (int d = 0; d < 4; ++d) {
            const int a = i + di[d], b = j + dj[d];
            if (a < 0 || a >= h || b < 0 || b >= w) {
                continue;
            }
            const std::size_t n = static_cast<std::size_t>(a) * w + b;
            if (!seen[n] && hole[n] > 0.0f) {
                seen[n] = 1;
                q.push(n);
            }
        }
    }
    return reached == total;
}

}  // namespace

TEST_CASE("s1 examples")
{
    const Tensor<double> ones(Shape{1, 2, 2}, 1.0), zeros(Shape{1, 2, 2}, 0.0), half(Shape{1, 2, 2}, 0.5);
    CHECK(make_s1(cst(half), cst(ones)).value().max_value() == 0.0);
    CHECK(make_s1(cst(ones), cst(zeros)).value().min_value() == 1.0);
    CHECK(make_s1(cst(half), cst(zeros)).value()[0] == 0.5);
    CHECK_THROWS_AS(make_s1(cst(half), cst(half)), ValidationError);
}

TEST_CASE("s2 examples")
{
    const Tensor<double> ones(Shape{1, 2, 2}, 1.0), zeros(Shape{1, 2, 2}, 0.0), half(Shape{1, 2, 2}, 0.5);
    CHECK(make_s2(cst(ones), cst(zeros)).value().max_value() == 0.0);
    CHECK(make_s2(cst(zeros), cst(zeros)).value().min_value() == 1.0);
    CHECK(make_s2(cst(zeros), cst(half)).value()[0] == 0.5);
    CHECK_THROWS_AS(make_s2(cst(ones), cst(half)), ValidationError);
    Tensor<double> dust(Shape{1, 1, 2}, std::vector<double>{1.0 - 1e-12, 0.25});
    const auto s2 = make_s2(cst(Tensor<double>(Shape{1, 1, 2}, 0.0)), cst(dust));
    CHECK(s2.value()[0] == 0.0);
    CHECK(s2.value()[1] == 0.75);
}

TEST_CASE("binarize uses the >= rule")
{
    CHECK(binarize(Tensor<double>(Shape{3}, 0.9), 0.5).min_value() == 1.0);
    CHECK(binarize(Tensor<double>(Shape{3}, 0.1), 0.5).max_value() == 0.0);
    CHECK(binarize(Tensor<double>(Shape{3}, 0.5), 0.5).min_value() == 1.0);
    CHECK_THROWS_AS(binarize(Tensor<double>(Shape{3}, 0.5), 1.0), ValidationError);
}

TEST_CASE("rectangle area accounting")
{
    CHECK(count_zeros(random_rect_mask(3, 64, 64, 0.25, 0.25)) == 1024);
    CHECK(random_rect_mask(9, 64, 64, 0.1, 0.3) == random_rect_mask(9, 64, 64, 0.1, 0.3));
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        const auto z = count_zeros(random_rect_mask(seed, 64, 64, 0.05, 0.6));
        REQUIRE(z <= static_cast<std::size_t>(0.6 * 64 * 64));
        REQUIRE(z >= static_cast<std::size_t>(std::ceil(0.05 * 64 * 64)));
    }
    CHECK_THROWS_AS(random_rect_mask(0, 64, 64, 0.3, 0.2), ValidationError);
    CHECK_THROWS_AS(random_rect_mask(0, 64, 64, 0.1, 0.7), ValidationError);
    CHECK_THROWS_AS(random_rect_mask(0, 64, 64, 0.0, 0.2), ValidationError);
}

TEST_CASE("lattice paths are 4-connected and end where asked")
{
    const auto p = lattice_path({2, 3}, {-4, 7});
    CHECK(p.front() == std::pair<int, int>{2, 3});
    CHECK(p.back() == std::pair<int, int>{-4, 7});
    CHECK(p.size() == 11);
    for (std::size_t k = 1; k < p.size(); ++k) {
        CHECK(std::abs(p[k].first - p[k - 1].first) + std::abs(p[k].second - p[k - 1].second) == 1);
    }
}

TEST_CASE("irregular strokes")
{
    CHECK(random_irregular_mask(4, 64, 64, 3, 4) == random_irregular_mask(4, 64, 64, 3, 4));
    CHECK_THROWS_AS(random_irregular_mask(4, 64, 64, 0, 4), ValidationError);
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        for (const Stroke& s : random_strokes(seed, 64, 64, 3, 5)) {
            const auto hole = rasterize_stroke(s, 64, 64);
            REQUIRE(four_connected(hole));
        }
        const Stroke s = random_strokes(seed, 64, 64, 1, 1).front();
        double length = 0.0;
        for (std::size_t k = 1; k < s.vertices.size(); ++k) {
            length += std::hypot(s.vertices[k].first - s.vertices[k - 1].first,
                                 s.vertices[k].second - s.vertices[k - 1].second);
        }
        if (length > 0.0) {
            REQUIRE(rasterize_stroke(s, 64, 64).sum() <= 3.0 * length);
        }
    }
}

TEST_CASE("binarized masks partition the pixels")
{
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto m = random_rect_mask(seed, 16, 16, 0.1, 0.5).cast<double>();
        const auto flow = normalize_pixel_flow(testutil::smooth_pixel_flow(16, 16, seed), 16, 16);
        const MaskPair<double> p = make_mask_pair(m, flow, true);
        for (std::size_t i = 0; i < m.size(); ++i) {
            REQUIRE(p.m[i] + p.s1[i] + p.s2[i] == 1.0);
            REQUIRE(p.s1[i] * p.m[i] == 0.0);
        }
    }
}

TEST_CASE("symmetric holes leave nothing to mirror")
{
    const auto m = rect_hole_mask(16, 16, 5, 4, 6, 5).cast<double>();  // columns 5..10 mirror onto themselves
    REQUIRE(flip_horizontal(m) == m);
    const MaskPair<double> p = make_mask_pair(m, identity_flow<double>(16, 16), true);
    CHECK(p.s1.max_value() == 0.0);
}

TEST_CASE("half-face holes are fully mirror-fillable under the mirror flow")
{
    const auto face = generate_face(5, 64, {0.2, 0.0});
    const auto m = left_eye_hole_mask(face).cast<double>();
    const MaskPair<double> p = make_mask_pair(m, face.mirror_flow.cast<double>(), true);
    CHECK(p.s2.max_value() == 0.0);
    CHECK(p.s1.sum() == doctest::Approx(m.size() - m.sum()));
}
