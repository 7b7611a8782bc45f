#include "mirrorfill/illumination.hpp"

#include <algorithm>
#include <cmath>

namespace mirrorfill {

template <typename T>
Var<T> clamp_ratio(const Var<T>& r)
{
    return ag::clamp(r, static_cast<T>(kRatioMin), static_cast<T>(kRatioMax));
}

template <typename T>
Var<T> compose_stage1(const Var<T>& i_o, const Var<T>& i_w, const Var<T>& r, const Var<T>& s1)
{
    require_same_shape(i_o.value(), i_w.value(), "compose_stage1 (i_w)");
    require_same_shape(i_o.value(), r.value(), "compose_stage1 (r)");
    Var<T> s = s1;
    if (s1.shape().size() == 3 && s1.shape()[0] == 1 && i_o.shape()[0] != 1) {
        s = ag::repeat_channels(s1, i_o.shape()[0]);
    }
    require_same_shape(i_o.value(), s.value(), "compose_stage1 (s1)");
    const Var<T> mirrored = ag::mul(s, ag::mul(i_w, r));
    const Var<T> kept = ag::mul(ag::one_minus(s), i_o);
    return ag::clamp(ag::add(mirrored, kept), T(0), T(1));
}

template <typename T>
Var<T> illumination_consistency_loss(const Var<T>& i_w_prime, const Var<T>& r, const Var<T>& i)
{
    require_same_shape(i_w_prime.value(), r.value(), "illumination_consistency_loss (r)");
    return ag::mse(ag::mul(i_w_prime, r), i);
}

Tensor<float> ratio_false_color(const Tensor<float>& r)
{
    if (r.rank() != 3) {
        throw DimensionError("ratio_false_color: expected C x H x W, got " + shape_str(r.shape()));
    }
    const int c = r.channels(), h = r.height(), w = r.width();
    const double span = std::log(kRatioMax);
    Tensor<float> out(Shape{3, h, w});
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            double acc = 0.0;
            for (int k = 0; k < c; ++k) {
                acc += std::log(std::clamp<double>(r.at(k, i, j), kRatioMin, kRatioMax));
            }
            const double t = std::clamp(acc / c / span, -1.0, 1.0);
            const float fade = static_cast<float>(1.0 - std::abs(t));
            out.at(0, i, j) = t >= 0 ? 1.0f : fade;
            out.at(1, i, j) = fade;
            out.at(2, i, j) = t <= 0 ? 1.0f : fade;
        }
    }
    return out;
}

#define MIRRORFILL_INSTANTIATE_ILLUM(T)                                                          \
    template Var<T> clamp_ratio(const Var<T>&);                                                  \
    template Var<T> compose_stage1(const Var<T>&, const Var<T>&, const Var<T>&, const Var<T>&); \
    template Var<T> illumination_consistency_loss(const Var<T>&, const Var<T>&, const Var<T>&);

MIRRORFILL_INSTANTIATE_ILLUM(float)
MIRRORFILL_INSTANTIATE_ILLUM(double)

}  // namespace mirrorfill
