#include "mirrorfill/losses.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

namespace mirrorfill {
namespace {

template <typename T>
void require_probabilities(const Var<T>& p, const char* what)
{
    for (T v : p.value().vec()) {
        if (!(v >= T(0) && v <= T(1))) {
            throw NumericError(std::string(what) + ": discriminator output outside [0, 1]");
        }
    }
}

template <typename T>
double value_or_zero(const Var<T>& v)
{
    return v.defined() ? static_cast<double>(v.item()) : 0.0;
}

}  // namespace

void LossWeights::validate() const
{
    std::vector<double> all = {lambda_r2, lambda_rp, lambda_ag, lambda_s, lambda_l, lambda_lm, lambda_tv};
    all.insert(all.end(), lambda_ap.begin(), lambda_ap.end());
    for (double v : all) {
        if (!std::isfinite(v) || v < 0.0) {
            throw ValidationError("loss weights must be finite and non-negative");
        }
    }
}

template <typename T>
Var<T> landmark_loss(const Var<T>& flow, const LandmarkSet& lm, const LandmarkSet& lm_flip)
{
    if (lm.size() != lm_flip.size() || lm.size() == 0) {
        throw ValidationError("landmark_loss: landmark sets must be non-empty and of equal size");
    }
    const int h = flow.shape().at(1), w = flow.shape().at(2);
    for (const auto& [x, y] : lm_flip.pts) {
        if (!(x >= 0.0 && x <= w - 1 && y >= 0.0 && y <= h - 1)) {
            throw DomainError("landmark_loss: flipped landmark outside the image");
        }
    }
    const Var<T> mapped = eval_flow_at_points(flow, lm);  // 2 x 1 x L
    const int n = static_cast<int>(lm.size());
    Tensor<T> target(Shape{2, 1, n});
    for (int i = 0; i < n; ++i) {
        target.at(0, 0, i) = static_cast<T>(lm_flip.pts[i].first);
        target.at(1, 0, i) = static_cast<T>(lm_flip.pts[i].second);
    }
    // mse averages over 2L entries; the per-landmark squared distance is twice that.
    return ag::scale(ag::mse(mapped, Var<T>::constant(std::move(target))), T(2));
}

template <typename T>
Var<T> tv_loss(const Var<T>& flow)
{
    const Shape& s = flow.shape();
    if (s.size() != 3 || s[0] != 2) {
        throw DimensionError("tv_loss: expected 2 x H x W flow, got " + shape_str(s));
    }
    const int h = s[1], w = s[2];
    const std::array<double, 2> unit = {(w - 1) / 2.0, (h - 1) / 2.0};
    const double denom = 4.0 * h * w;
    const Tensor<T>& f = flow.value();
    double acc = 0.0;
    for (int c = 0; c < 2; ++c) {
        const double k = unit[c] * unit[c];
        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < w; ++j) {
                const double v = f.at(c, i, j);
                if (j + 1 < w) {
                    const double d = f.at(c, i, j + 1) - v;
                    acc += k * d * d;
                }
                if (i + 1 < h) {
                    const double d = f.at(c, i + 1, j) - v;
                    acc += k * d * d;
                }
            }
        }
    }
    return ag::make_node<T>(Tensor<T>::scalar(static_cast<T>(acc / denom)), {flow},
                            [unit, denom, h, w](Node<T>& self) {
                                const Tensor<T>& f = self.inputs[0]->value;
                                Tensor<T>& g = self.inputs[0]->grad_buffer();
                                const double gy = self.grad[0];
                                for (int c = 0; c < 2; ++c) {
                                    const double k = 2.0 * gy * unit[c] * unit[c] / denom;
                                    for (int i = 0; i < h; ++i) {
                                        for (int j = 0; j < w; ++j) {
                                            const double v = f.at(c, i, j);
                                            if (j + 1 < w) {
                                                const double d = k * (f.at(c, i, j + 1) - v);
                                                g.at(c, i, j + 1) += static_cast<T>(d);
                                                g.at(c, i, j) -= static_cast<T>(d);
                                            }
                                            if (i + 1 < h) {
                                                const double d = k * (f.at(c, i + 1, j) - v);
                                                g.at(c, i + 1, j) += static_cast<T>(d);
                                                g.at(c, i, j) -= static_cast<T>(d);
                                            }
                                        }
                                    }
                                }
                            });
}

template <typename T>
Var<T> perceptual_symmetry_loss(const Var<T>& feat, const Var<T>& feat_flip, const Var<T>& flow_ds,
                                const Var<T>& s2_ds)
{
    require_same_shape(feat.value(), feat_flip.value(), "perceptual_symmetry_loss (features)");
    const Shape& fs = feat.shape();
    if (s2_ds.shape() != Shape{1, fs[1], fs[2]}) {
        throw DimensionError("perceptual_symmetry_loss: mask " + shape_str(s2_ds.shape()) +
                             " does not match features " + shape_str(fs));
    }
    const Var<T> diff = ag::sub(feat, bilinear_warp(feat_flip, flow_ds));
    const Var<T> masked = ag::mul(diff, ag::repeat_channels(s2_ds, fs[0]));
    return ag::mean(ag::square(masked));
}

template <typename T>
Var<T> l2_loss(const Var<T>& pred, const Var<T>& gt)
{
    return ag::mse(pred, gt);
}

template <typename T>
Var<T> perceptual_loss(const Var<T>& pred, const Var<T>& gt, const Network<T>& extractor)
{
    require_same_shape(pred.value(), gt.value(), "perceptual_loss");
    const ForwardResult<T> a = forward(extractor, pred);
    const ForwardResult<T> b = forward(extractor, gt);
    const Var<T> fa = a.tap.defined() ? a.tap : a.output;
    const Var<T> fb = b.tap.defined() ? b.tap : b.output;
    return ag::mse(fa, fb);
}

template <typename T>
Var<T> reconstruction_loss(const Var<T>& pred, const Var<T>& gt, const Network<T>& extractor, const LossWeights& w)
{
    std::vector<Var<T>> terms{l2_loss(pred, gt)};
    std::vector<T> weights{static_cast<T>(w.lambda_r2)};
    if (w.lambda_rp != 0.0) {
        terms.push_back(perceptual_loss(pred, gt, extractor));
        weights.push_back(static_cast<T>(w.lambda_rp));
    }
    return ag::weighted_sum(terms, weights);
}

template <typename T>
Var<T> discriminator_loss(const Var<T>& real, const Var<T>& fake)
{
    require_probabilities(real, "discriminator_loss");
    require_probabilities(fake, "discriminator_loss");
    return ag::weighted_sum<T>({ag::binary_cross_entropy(real, T(1)), ag::binary_cross_entropy(fake, T(0))},
                               {T(0.5), T(0.5)});
}

template <typename T>
Var<T> generator_adversarial_loss(const Var<T>& fake)
{
    require_probabilities(fake, "generator_adversarial_loss");
    return ag::binary_cross_entropy(fake, T(1));
}

template <typename T>
AdversarialPair<T> adversarial_losses(const Var<T>& real, const Var<T>& fake)
{
    return {discriminator_loss(real, fake), generator_adversarial_loss(fake)};
}

template <typename T>
Var<T> combine_adversarial(const Var<T>& global, const std::array<Var<T>, 4>& parts, const LossWeights& w)
{
    std::vector<Var<T>> terms{global};
    std::vector<T> weights{static_cast<T>(w.lambda_ag)};
    for (std::size_t i = 0; i < parts.size(); ++i) {
        terms.push_back(parts[i]);
        weights.push_back(static_cast<T>(w.lambda_ap[i]));
    }
    return ag::weighted_sum(terms, weights);
}

template <typename T>
Objective<T> total_loss(const LossTerms<T>& terms, const LossWeights& w)
{
    w.validate();
    const std::array<std::pair<Var<T>, double>, 6> weighted = {{{terms.rec, 1.0},
                                                                 {terms.adv, 1.0},
                                                                 {terms.sym, w.lambda_s},
                                                                 {terms.illum, w.lambda_l},
                                                                 {terms.landmark, w.lambda_lm},
                                                                 {terms.tv, w.lambda_tv}}};
    std::vector<Var<T>> vs;
    std::vector<T> ws;
    double total = 0.0;
    for (const auto& [v, lambda] : weighted) {
        if (v.defined()) {
            vs.push_back(v);
            ws.push_back(static_cast<T>(lambda));
            total += lambda * static_cast<double>(v.item());
        }
    }
    Objective<T> out;
    out.total = vs.empty() ? Var<T>::constant(Tensor<T>::scalar(T(0))) : ag::weighted_sum(vs, ws);
    out.report.rec = value_or_zero(terms.rec);
    out.report.adv = value_or_zero(terms.adv);
    out.report.sym = value_or_zero(terms.sym);
    out.report.illum = value_or_zero(terms.illum);
    out.report.landmark = value_or_zero(terms.landmark);
    out.report.tv = value_or_zero(terms.tv);
    out.report.total = total;
    return out;
}

std::string loss_csv_header()
{
    return "step,stage,rec,adv,sym,illum,landmark,tv,disc,total";
}

std::string loss_csv_row(const LossReport& r)
{
    std::ostringstream os;
    os << std::setprecision(9) << r.step << ',' << r.stage << ',' << r.rec << ',' << r.adv << ',' << r.sym << ','
       << r.illum << ',' << r.landmark << ',' << r.tv << ',' << r.disc << ',' << r.total;
    return os.str();
}

#define MIRRORFILL_INSTANTIATE_LOSSES(T)                                                                      \
    template Var<T> landmark_loss(const Var<T>&, const LandmarkSet&, const LandmarkSet&);                     \
    template Var<T> tv_loss(const Var<T>&);                                                                   \
    template Var<T> perceptual_symmetry_loss(const Var<T>&, const Var<T>&, const Var<T>&, const Var<T>&);     \
    template Var<T> l2_loss(const Var<T>&, const Var<T>&);                                                    \
    template Var<T> perceptual_loss(const Var<T>&, const Var<T>&, const Network<T>&);                         \
    template Var<T> reconstruction_loss(const Var<T>&, const Var<T>&, const Network<T>&, const LossWeights&); \
    template Var<T> discriminator_loss(const Var<T>&, const Var<T>&);                                         \
    template Var<T> generator_adversarial_loss(const Var<T>&);                                                \
    template AdversarialPair<T> adversarial_losses(const Var<T>&, const Var<T>&);                             \
    template Var<T> combine_adversarial(const Var<T>&, const std::array<Var<T>, 4>&, const LossWeights&);     \
    template Objective<T> total_loss(const LossTerms<T>&, const LossWeights&);

MIRRORFILL_INSTANTIATE_LOSSES(float)
MIRRORFILL_INSTANTIATE_LOSSES(double)

}  // namespace mirrorfill
