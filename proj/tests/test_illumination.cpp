#include "doctest.h"

#include "mirrorfill/geometry.hpp"
#include "mirrorfill/illumination.hpp"
#include "test_util.hpp"

using namespace mirrorfill;
using testutil::random_tensor;

namespace {

Var<double> cst(const Tensor<double>& t)
{
    return Var<double>::constant(t);
}

}  // namespace

TEST_CASE("stage-1 composite examples")
{
    const auto io = random_tensor(Shape{3, 4, 4}, 1, 0.0, 1.0);
    const auto iw = random_tensor(Shape{3, 4, 4}, 2, 0.0, 1.0);
    const Tensor<double> one(Shape{3, 4, 4}, 1.0), s_zero(Shape{1, 4, 4}, 0.0), s_one(Shape{1, 4, 4}, 1.0);
    CHECK(compose_stage1(cst(io), cst(iw), cst(one), cst(s_zero)).value() == io);
    CHECK(max_abs_diff(compose_stage1(cst(io), cst(iw), cst(one), cst(s_one)).value(), iw) < 1e-15);

    const Tensor<double> p(Shape{1, 1, 1}, 0.4), r(Shape{1, 1, 1}, 1.5), s(Shape{1, 1, 1}, 1.0);
    CHECK(compose_stage1(cst(Tensor<double>(Shape{1, 1, 1}, 0.9)), cst(p), cst(r), cst(s)).item() ==
          doctest::Approx(0.6));
    CHECK(compose_stage1(cst(io), cst(iw), cst(Tensor<double>(Shape{3, 4, 4}, 10.0)), cst(s_one)).value().max_value() <=
          1.0);
    CHECK_THROWS_AS(compose_stage1(cst(io), cst(iw), cst(Tensor<double>(Shape{3, 4, 5}, 1.0)), cst(s_one)),
                    DimensionError);
}

TEST_CASE("illumination consistency examples")
{
    const auto iwp = random_tensor(Shape{3, 4, 4}, 3, 0.1, 1.0);
    const auto i = random_tensor(Shape{3, 4, 4}, 4, 0.0, 1.0);
    Tensor<double> ratio(i.shape());
    for (std::size_t k = 0; k < i.size(); ++k) {
        ratio[k] = i[k] / iwp[k];
    }
    CHECK(illumination_consistency_loss(cst(iwp), cst(ratio), cst(i)).item() < 1e-10);
    CHECK(illumination_consistency_loss(cst(Tensor<double>(Shape{3, 2, 2}, 0.4)), cst(Tensor<double>(Shape{3, 2, 2}, 1.0)),
                                        cst(Tensor<double>(Shape{3, 2, 2}, 0.8)))
              .item() == doctest::Approx(0.16));
    CHECK(illumination_consistency_loss(cst(i), cst(Tensor<double>(i.shape(), 1.0)), cst(i)).item() == 0.0);
}

TEST_CASE("illumination consistency gradient in the ratio")
{
    const auto iwp = random_tensor(Shape{3, 4, 4}, 5, 0.1, 1.0);
    const auto i = random_tensor(Shape{3, 4, 4}, 6, 0.0, 1.0);
    const auto res = grad_check(
        [&](const std::vector<Var<double>>& v) { return illumination_consistency_loss(cst(iwp), v[0], cst(i)); },
        {random_tensor(Shape{3, 4, 4}, 7, 0.5, 2.0)});
    CHECK(res.max_rel_error < 1e-4);
}

TEST_CASE("ratio clamp bounds")
{
    Tensor<double> r(Shape{3}, std::vector<double>{0.0, 1.0, 50.0});
    const auto c = clamp_ratio(cst(r)).value();
    CHECK(c[0] == doctest::Approx(0.1));
    CHECK(c[1] == 1.0);
    CHECK(c[2] == 10.0);
}

TEST_CASE("false colour is white at unit ratio")
{
    const auto img = ratio_false_color(Tensor<float>(Shape{3, 2, 2}, 1.0f));
    CHECK(img.min_value() == 1.0f);
    const auto hi = ratio_false_color(Tensor<float>(Shape{3, 1, 1}, 10.0f));
    CHECK(hi.at(0, 0, 0) == 1.0f);
    CHECK(hi.at(2, 0, 0) == 0.0f);
}
