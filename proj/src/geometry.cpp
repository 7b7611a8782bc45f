#include "mirrorfill/geometry.hpp"

#include <fstream>
#include <random>

#include "binary_io.hpp"

namespace mirrorfill {

LandmarkSet flip_landmarks(const LandmarkSet& lm, int width)
{
    LandmarkSet out;
    out.flip_perm = lm.flip_perm;
    out.pts.resize(lm.size());
    for (std::size_t i = 0; i < lm.size(); ++i) {
        const auto& partner = lm.pts.at(static_cast<std::size_t>(lm.flip_perm.at(i)));
        out.pts[i] = {static_cast<double>(width - 1) - partner.first, partner.second};
    }
    return out;
}

template <typename T>
Tensor<T> denormalize_flow(const Tensor<T>& flow, int height, int width)
{
    if (flow.rank() != 3 || flow.channels() != 2) {
        throw DimensionError("denormalize_flow: expected 2 x H x W, got " + shape_str(flow.shape()));
    }
    Tensor<T> out(flow.shape());
    const std::size_t plane = static_cast<std::size_t>(flow.height()) * flow.width();
    const T sx = static_cast<T>(width - 1) / T(2);
    const T sy = static_cast<T>(height - 1) / T(2);
    for (std::size_t i = 0; i < plane; ++i) {
        out[i] = (flow[i] + T(1)) * sx;
        out[plane + i] = (flow[plane + i] + T(1)) * sy;
    }
    return out;
}

template <typename T>
Tensor<T> normalize_pixel_flow(const Tensor<T>& pixel_flow, int height, int width)
{
    if (pixel_flow.rank() != 3 || pixel_flow.channels() != 2) {
        throw DimensionError("normalize_pixel_flow: expected 2 x H x W, got " + shape_str(pixel_flow.shape()));
    }
    Tensor<T> out(pixel_flow.shape());
    const std::size_t plane = static_cast<std::size_t>(pixel_flow.height()) * pixel_flow.width();
    const T sx = width > 1 ? T(2) / static_cast<T>(width - 1) : T(0);
    const T sy = height > 1 ? T(2) / static_cast<T>(height - 1) : T(0);
    for (std::size_t i = 0; i < plane; ++i) {
        out[i] = width > 1 ? pixel_flow[i] * sx - T(1) : T(0);
        out[plane + i] = height > 1 ? pixel_flow[plane + i] * sy - T(1) : T(0);
    }
    return out;
}

template <typename T>
Tensor<T> identity_flow(int height, int width)
{
    Tensor<T> pix(Shape{2, height, width});
    for (int i = 0; i < height; ++i) {
        for (int j = 0; j < width; ++j) {
            pix.at(0, i, j) = static_cast<T>(j);
            pix.at(1, i, j) = static_cast<T>(i);
        }
    }
    return normalize_pixel_flow(pix, height, width);
}

template <typename T>
Var<T> bilinear_warp(const Var<T>& source, const Var<T>& flow)
{
    const auto& s = source.shape();
    const auto& f = flow.shape();
    if (s.size() != 3 || f.size() != 3 || f[0] != 2 || s[1] != f[1] || s[2] != f[2]) {
        throw DimensionError("bilinear_warp: source " + shape_str(s) + " and flow " + shape_str(f) +
                             " must share H x W (flow is 2 x H x W)");
    }
    return ag::grid_sample(source, flow);
}

template <typename T>
Var<T> warp_mask(const Var<T>& mask_flip, const Var<T>& flow)
{
    if (mask_flip.shape().size() != 3 || mask_flip.shape()[0] != 1) {
        throw DimensionError("warp_mask: expected 1 x H x W mask, got " + shape_str(mask_flip.shape()));
    }
    for (T v : mask_flip.value().vec()) {
        if (!(v >= T(0) && v <= T(1))) {
            throw ValidationError("warp_mask: mask values must lie in [0,1]");
        }
    }
    return bilinear_warp(mask_flip, flow);
}

template <typename T>
Var<T> resize_bilinear(const Var<T>& x, int target_h, int target_w)
{
    if (target_h < 1 || target_w < 1) {
        throw DimensionError("resize_bilinear: target size must be positive");
    }
    return ag::grid_sample(x, Var<T>::constant(identity_flow<T>(target_h, target_w)));
}

template <typename T>
Var<T> downsample_flow(const Var<T>& flow, int target_h, int target_w)
{
    const auto& f = flow.shape();
    if (f.size() != 3 || f[0] != 2) {
        throw DimensionError("downsample_flow: expected 2 x H x W, got " + shape_str(f));
    }
    if (target_h < 1 || target_w < 1 || f[1] % target_h != 0 || f[2] % target_w != 0) {
        throw DimensionError("downsample_flow: target " + std::to_string(target_h) + "x" + std::to_string(target_w) +
                             " does not divide " + shape_str(f));
    }
    return resize_bilinear(flow, target_h, target_w);
}

template <typename T>
Var<T> eval_flow_at_points(const Var<T>& flow, const LandmarkSet& pts)
{
    const auto& f = flow.shape();
    if (f.size() != 3 || f[0] != 2) {
        throw DimensionError("eval_flow_at_points: expected 2 x H x W, got " + shape_str(f));
    }
    // Bilinear interpolation commutes with the per-channel affine denormalization.
    Var<T> sampled = ag::sample_points(flow, pts.pts);
    const T sx = static_cast<T>(f[2] - 1) / T(2);
    const T sy = static_cast<T>(f[1] - 1) / T(2);
    Var<T> x = ag::scale(ag::add_scalar(ag::slice_channels(sampled, 0, 1), T(1)), sx);
    Var<T> y = ag::scale(ag::add_scalar(ag::slice_channels(sampled, 1, 1), T(1)), sy);
    return ag::concat_channels(x, y);
}

GradCheckResult grad_check_leaves(const std::function<Var<double>()>& fn, const std::vector<Var<double>>& leaves,
                                  const GradCheckOptions& options)
{
    if (!(options.epsilon > 0.0)) {
        throw ValidationError("grad_check: epsilon must be positive");
    }
    std::mt19937_64 rng(options.seed);

    Var<double> probe = fn();
    // Fixed contraction weights turn tensor outputs into a scalar objective.
    std::vector<double> weights;
    if (probe.value().size() != 1) {
        std::normal_distribution<double> nd(0.0, 1.0);
        weights.resize(probe.value().size());
        for (double& w : weights) {
            w = nd(rng);
        }
    }
    auto objective = [&]() -> Var<double> {
        Var<double> out = fn();
        if (!out.value().all_finite()) {
            throw NumericError("grad_check: non-finite output");
        }
        if (weights.empty()) {
            return out;
        }
        Var<double> w = Var<double>::constant(Tensor<double>(out.shape(), weights));
        return ag::sum(ag::mul(out, w));
    };

    std::vector<Var<double>> work = leaves;
    for (auto& l : work) {
        l.set_requires_grad(true);
        l.zero_grad();
    }
    Var<double> loss = objective();
    loss.backward();

    struct Coord {
        std::size_t input;
        std::size_t index;
        double analytic;
    };
    std::vector<Coord> coords;
    double max_analytic = 0.0;
    for (std::size_t k = 0; k < work.size(); ++k) {
        const Tensor<double> g = work[k].grad();
        if (!g.all_finite()) {
            throw NumericError("grad_check: non-finite analytic gradient");
        }
        std::vector<std::size_t> idx(g.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            idx[i] = i;
        }
        if (options.max_coords_per_input > 0 && idx.size() > options.max_coords_per_input) {
            std::shuffle(idx.begin(), idx.end(), rng);
            idx.resize(options.max_coords_per_input);
        }
        for (std::size_t i : idx) {
            if (options.skip && options.skip(k, i)) {
                continue;
            }
            coords.push_back({k, i, g[i]});
            max_analytic = std::max(max_analytic, std::abs(g[i]));
        }
    }

    const double floor = std::max(1e-3 * max_analytic, 1e-12);
    GradCheckResult result;
    for (const Coord& c : coords) {
        double& slot = work[c.input].mutable_value()[c.index];
        const double saved = slot;
        slot = saved + options.epsilon;
        const double up = objective().item();
        slot = saved - options.epsilon;
        const double down = objective().item();
        slot = saved;
        const double numeric = (up - down) / (2.0 * options.epsilon);
        const double denom = std::max({std::abs(c.analytic), std::abs(numeric), floor});
        result.max_rel_error = std::max(result.max_rel_error, std::abs(c.analytic - numeric) / denom);
        ++result.checked;
    }
    return result;
}

GradCheckResult grad_check(const std::function<Var<double>(const std::vector<Var<double>>&)>& fn,
                           const std::vector<Tensor<double>>& inputs, const GradCheckOptions& options)
{
    std::vector<Var<double>> leaves;
    leaves.reserve(inputs.size());
    for (const auto& t : inputs) {
        leaves.push_back(Var<double>::leaf(t));
    }
    return grad_check_leaves([&]() { return fn(leaves); }, leaves, options);
}

void write_flow_raw(const std::filesystem::path& path, const Tensor<float>& flow)
{
    if (flow.rank() != 3 || flow.channels() != 2 || flow.height() > 0xFFFF || flow.width() > 0xFFFF) {
        throw DimensionError("write_flow_raw: expected 2 x H x W flow, got " + shape_str(flow.shape()));
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw ValidationError("cannot open " + path.string() + " for writing");
    }
    os.write("SFLW", 4);
    detail::put(os, static_cast<std::uint16_t>(flow.height()));
    detail::put(os, static_cast<std::uint16_t>(flow.width()));
    os.write(reinterpret_cast<const char*>(flow.data()), static_cast<std::streamsize>(flow.size() * sizeof(float)));
}

Tensor<float> read_flow_raw(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw ValidationError("cannot open " + path.string());
    }
    detail::Reader r(is);
    char magic[4];
    r.read_bytes(magic, 4, "magic");
    if (std::string(magic, 4) != "SFLW") {
        throw FormatError("bad flow magic at offset 0");
    }
    const int h = r.get<std::uint16_t>("height");
    const int w = r.get<std::uint16_t>("width");
    if (h == 0 || w == 0) {
        throw FormatError("zero flow dimension at offset 4");
    }
    Tensor<float> flow(Shape{2, h, w});
    r.read_bytes(flow.data(), flow.size() * sizeof(float), "flow payload");
    return flow;
}

#define MIRRORFILL_INSTANTIATE_GEOM(T)                                          \
    template Tensor<T> denormalize_flow(const Tensor<T>&, int, int);            \
    template Tensor<T> normalize_pixel_flow(const Tensor<T>&, int, int);        \
    template Tensor<T> identity_flow(int, int);                                 \
    template Var<T> bilinear_warp(const Var<T>&, const Var<T>&);                \
    template Var<T> warp_mask(const Var<T>&, const Var<T>&);                    \
    template Var<T> downsample_flow(const Var<T>&, int, int);                   \
    template Var<T> resize_bilinear(const Var<T>&, int, int);                   \
    template Var<T> eval_flow_at_points(const Var<T>&, const LandmarkSet&);

MIRRORFILL_INSTANTIATE_GEOM(float)
MIRRORFILL_INSTANTIATE_GEOM(double)

}  // namespace mirrorfill
