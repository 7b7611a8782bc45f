#include "mirrorfill/networks.hpp"

#include <cmath>
#include <random>

namespace mirrorfill {
namespace {

constexpr double kLeakySlope = 0.2;
constexpr double kNormEps = 1e-5;
constexpr std::array<int, 8> kEncoderMultipliers = {1, 2, 4, 8, 16, 16, 16, 16};

LayerSpec conv(int out, int k, int s, int p) { return {LayerKind::Conv, out, k, s, p}; }
LayerSpec tconv(int out, int k, int s, int p) { return {LayerKind::TransConv, out, k, s, p}; }
LayerSpec norm() { return {LayerKind::Norm}; }
LayerSpec act(Activation a)
{
    LayerSpec l{LayerKind::Act};
    l.act = a;
    return l;
}
LayerSpec slot(LayerKind kind, int s)
{
    LayerSpec l{kind};
    l.skip_slot = s;
    return l;
}

int log2_exact(int n)
{
    int d = 0;
    while ((1 << d) < n) {
        ++d;
    }
    return d;
}

std::vector<int> encoder_widths(int base_width, int depth)
{
    std::vector<int> w;
    for (int d = 0; d < depth; ++d) {
        w.push_back(base_width * kEncoderMultipliers.at(std::min<std::size_t>(d, kEncoderMultipliers.size() - 1)));
    }
    return w;
}

enum class Trunk { Flow, Light, Rec };

Architecture describe_encoder_decoder(Trunk trunk, int base_width, int input_size, int tap_level, bool dropout)
{
    validate_input_size(input_size);
    if (base_width < 1) {
        throw ValidationError("network base width must be positive");
    }
    const int depth = log2_exact(input_size);
    const std::vector<int> enc = encoder_widths(base_width, depth);
    const bool rec = trunk == Trunk::Rec;
    if (rec && (tap_level < 1 || tap_level > depth - 1)) {
        throw ValidationError("recnet tap level must lie in [1, " + std::to_string(depth - 1) + "], got " +
                              std::to_string(tap_level));
    }

    Architecture a;
    a.name = trunk == Trunk::Flow ? "flownet" : trunk == Trunk::Light ? "lightnet" : "recnet";
    a.in_channels = 6;
    a.input_size = input_size;
    auto& L = a.layers;
    for (int d = 0; d < depth; ++d) {
        L.push_back(conv(enc[d], 4, 2, 1));
        if (d != 0 && d != depth - 1) {
            L.push_back(norm());
        }
        L.push_back(act(Activation::LeakyReLU));
        if (rec && d < depth - 1) {
            L.push_back(slot(LayerKind::SaveSkip, d));
        }
    }
    for (int j = 0; j < depth - 1; ++j) {
        const int width = enc[depth - 2 - j];
        L.push_back(tconv(width, 4, 2, 1));
        L.push_back(norm());
        if (rec) {
            if (dropout && j < 3) {
                LayerSpec drop{LayerKind::Dropout};
                drop.p = 0.5;
                L.push_back(drop);
            }
            L.push_back(slot(LayerKind::ConcatSkip, depth - 2 - j));
            L.push_back(act(Activation::LeakyReLU));
            if (j == depth - 1 - tap_level) {
                LayerSpec tap{LayerKind::Tap};
                tap.out_channels = width;
                L.push_back(tap);
            }
        } else {
            L.push_back(act(Activation::ReLU));
        }
    }
    switch (trunk) {
    case Trunk::Flow:
        L.push_back(tconv(2, 4, 2, 1));
        L.push_back(act(Activation::Tanh));
        a.head_weight_scale = 0.1;
        break;
    case Trunk::Light: {
        L.push_back(tconv(3, 4, 2, 1));
        L.push_back(act(Activation::ReLU));
        LayerSpec c{LayerKind::Clamp};
        c.lo = 0.1;
        c.hi = 10.0;
        L.push_back(c);
        a.head_bias = 1.0;
        a.head_weight_scale = 0.1;
        break;
    }
    case Trunk::Rec:
        L.push_back(tconv(3, 4, 2, 1));
        L.push_back(act(Activation::Sigmoid));
        break;
    }
    return a;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt)
{
    // splitmix64 finalizer
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace

NetScale NetScale::from_fraction(double scale)
{
    for (int d : {1, 2, 4, 8}) {
        if (std::abs(scale - 1.0 / d) < 1e-9) {
            return NetScale{d};
        }
    }
    throw ValidationError("invalid network scale " + std::to_string(scale) + " (allowed: 1, 1/2, 1/4, 1/8)");
}

void validate_input_size(int input_size)
{
    if (input_size < 32 || (input_size & (input_size - 1)) != 0) {
        throw ValidationError("input size must be a power of two >= 32, got " + std::to_string(input_size));
    }
}

Architecture describe_flownet(int base_width, int input_size)
{
    return describe_encoder_decoder(Trunk::Flow, base_width, input_size, 1, false);
}

Architecture describe_lightnet(int base_width, int input_size)
{
    return describe_encoder_decoder(Trunk::Light, base_width, input_size, 1, false);
}

Architecture describe_recnet(int base_width, int input_size, int tap_level, bool dropout)
{
    return describe_encoder_decoder(Trunk::Rec, base_width, input_size, tap_level, dropout);
}

Architecture describe_global_discriminator(int base_width, int input_size)
{
    Architecture a;
    a.name = "disc_global";
    a.in_channels = 3;
    a.input_size = input_size;
    a.layers = {conv(base_width, 4, 2, 1),     act(Activation::LeakyReLU), conv(2 * base_width, 4, 2, 1),
                norm(),                        act(Activation::LeakyReLU), conv(4 * base_width, 4, 2, 1),
                norm(),                        act(Activation::LeakyReLU), conv(8 * base_width, 4, 1, 1),
                norm(),                        act(Activation::LeakyReLU), conv(1, 4, 1, 1),
                act(Activation::Sigmoid)};
    return a;
}

Architecture describe_part_discriminator(int base_width, int part_size)
{
    Architecture a;
    a.name = "disc_part";
    a.in_channels = 3;
    a.input_size = part_size;
    a.layers = {conv(base_width, 4, 2, 1),     act(Activation::LeakyReLU), conv(2 * base_width, 4, 2, 1),
                norm(),                        act(Activation::LeakyReLU), conv(4 * base_width, 4, 1, 1),
                norm(),                        act(Activation::LeakyReLU), conv(1, 4, 1, 1),
                act(Activation::Sigmoid)};
    return a;
}

Architecture describe_feature_extractor(int base_width, int input_size)
{
    Architecture a;
    a.name = "extractor";
    a.in_channels = 3;
    a.input_size = input_size;
    for (int m : {1, 2, 4, 8, 8}) {
        a.layers.push_back(conv(base_width * m, 4, 2, 1));
        a.layers.push_back(act(Activation::ReLU));
    }
    return a;
}

std::vector<Shape> infer_shapes(const Architecture& arch)
{
    std::vector<Shape> shapes;
    std::vector<Shape> slots;
    int c = arch.in_channels, h = arch.input_size, w = arch.input_size;
    for (const LayerSpec& l : arch.layers) {
        switch (l.kind) {
        case LayerKind::Conv: {
            const int ho = (h + 2 * l.pad - l.kernel) / l.stride + 1;
            const int wo = (w + 2 * l.pad - l.kernel) / l.stride + 1;
            if (h + 2 * l.pad < l.kernel || w + 2 * l.pad < l.kernel || ho < 1 || wo < 1) {
                throw DimensionError(arch.name + ": input " + std::to_string(arch.input_size) +
                                     " is smaller than the receptive field");
            }
            c = l.out_channels;
            h = ho;
            w = wo;
            break;
        }
        case LayerKind::TransConv:
            c = l.out_channels;
            h = (h - 1) * l.stride - 2 * l.pad + l.kernel;
            w = (w - 1) * l.stride - 2 * l.pad + l.kernel;
            break;
        case LayerKind::SaveSkip:
            if (static_cast<int>(slots.size()) <= l.skip_slot) {
                slots.resize(l.skip_slot + 1);
            }
            slots[l.skip_slot] = Shape{c, h, w};
            break;
        case LayerKind::ConcatSkip: {
            if (l.skip_slot < 0 || l.skip_slot >= static_cast<int>(slots.size()) || slots[l.skip_slot].empty()) {
                throw DimensionError(arch.name + ": concat references unknown encoder depth " +
                                     std::to_string(l.skip_slot));
            }
            const Shape& s = slots[l.skip_slot];
            if (s[1] != h || s[2] != w) {
                throw DimensionError(arch.name + ": skip " + std::to_string(l.skip_slot) + " spatial mismatch");
            }
            c += s[0];
            break;
        }
        case LayerKind::Tap:
            if (l.out_channels > c) {
                throw DimensionError(arch.name + ": tap wider than activation");
            }
            break;
        default:
            break;
        }
        shapes.push_back(Shape{c, h, w});
    }
    return shapes;
}

Shape output_shape(const Architecture& arch)
{
    return infer_shapes(arch).back();
}

Shape tap_shape(const Architecture& arch)
{
    const std::vector<Shape> shapes = infer_shapes(arch);
    for (std::size_t i = 0; i < arch.layers.size(); ++i) {
        if (arch.layers[i].kind == LayerKind::Tap) {
            return Shape{arch.layers[i].out_channels, shapes[i][1], shapes[i][2]};
        }
    }
    return {};
}

std::size_t count_parameters(const Architecture& arch)
{
    const std::vector<Shape> shapes = infer_shapes(arch);
    std::size_t n = 0;
    int c_in = arch.in_channels;
    for (std::size_t i = 0; i < arch.layers.size(); ++i) {
        const LayerSpec& l = arch.layers[i];
        if (l.kind == LayerKind::Conv || l.kind == LayerKind::TransConv) {
            n += static_cast<std::size_t>(c_in) * l.out_channels * l.kernel * l.kernel + l.out_channels;
        } else if (l.kind == LayerKind::Norm) {
            n += 2 * static_cast<std::size_t>(shapes[i][0]);
        }
        c_in = shapes[i][0];
    }
    return n;
}

template <typename T>
void Network<T>::set_trainable(bool on)
{
    for (auto& p : params) {
        p.set_requires_grad(on);
    }
}

template <typename T>
void Network<T>::zero_grad()
{
    for (auto& p : params) {
        p.zero_grad();
    }
}

template <typename T>
std::size_t Network<T>::numel() const
{
    std::size_t n = 0;
    for (const auto& p : params) {
        n += p.value().size();
    }
    return n;
}

template <typename T>
Network<T> make_network(const Architecture& arch, std::uint64_t seed)
{
    const std::vector<Shape> shapes = infer_shapes(arch);
    Network<T> net;
    net.arch = arch;
    std::mt19937_64 rng(seed);
    int last_weighted = -1;
    for (std::size_t i = 0; i < arch.layers.size(); ++i) {
        if (arch.layers[i].kind == LayerKind::Conv || arch.layers[i].kind == LayerKind::TransConv) {
            last_weighted = static_cast<int>(i);
        }
    }
    int c_in = arch.in_channels;
    for (std::size_t i = 0; i < arch.layers.size(); ++i) {
        const LayerSpec& l = arch.layers[i];
        const std::string prefix = arch.name + "." + std::to_string(i);
        net.layer_offset.push_back(-1);
        if (l.kind == LayerKind::Conv || l.kind == LayerKind::TransConv) {
            const bool transposed = l.kind == LayerKind::TransConv;
            const Shape ws = transposed ? Shape{c_in, l.out_channels, l.kernel, l.kernel}
                                        : Shape{l.out_channels, c_in, l.kernel, l.kernel};
            // Fan-in of a transposed conv counts the taps that reach one output.
            double fan_in = static_cast<double>(c_in) * l.kernel * l.kernel;
            if (transposed) {
                fan_in /= static_cast<double>(l.stride * l.stride);
            }
            double sd = std::sqrt(2.0 / fan_in);
            const bool head = static_cast<int>(i) == last_weighted;
            if (head) {
                sd *= arch.head_weight_scale;
            }
            std::normal_distribution<double> nd(0.0, sd);
            Tensor<T> w(ws);
            for (auto& v : w.vec()) {
                v = static_cast<T>(nd(rng));
            }
            Tensor<T> b(Shape{l.out_channels}, static_cast<T>(head ? arch.head_bias : 0.0));
            net.layer_offset.back() = static_cast<int>(net.params.size());
            net.names.push_back(prefix + ".weight");
            net.params.push_back(Var<T>::leaf(std::move(w)));
            net.names.push_back(prefix + ".bias");
            net.params.push_back(Var<T>::leaf(std::move(b)));
        } else if (l.kind == LayerKind::Norm) {
            const int c = shapes[i][0];
            net.layer_offset.back() = static_cast<int>(net.params.size());
            net.names.push_back(prefix + ".gamma");
            net.params.push_back(Var<T>::leaf(Tensor<T>(Shape{c}, T(1))));
            net.names.push_back(prefix + ".beta");
            net.params.push_back(Var<T>::leaf(Tensor<T>(Shape{c}, T(0))));
        }
        c_in = shapes[i][0];
    }
    return net;
}

template <typename T>
Network<T> build_flownet(NetScale scale, int input_size, std::uint64_t seed)
{
    return make_network<T>(describe_flownet(scale.base_width(), input_size), seed);
}

template <typename T>
Network<T> build_lightnet(NetScale scale, int input_size, std::uint64_t seed)
{
    return make_network<T>(describe_lightnet(scale.base_width(), input_size), seed);
}

template <typename T>
Network<T> build_recnet(NetScale scale, int input_size, int tap_level, std::uint64_t seed)
{
    return make_network<T>(describe_recnet(scale.base_width(), input_size, tap_level), seed);
}

template <typename T>
Network<T> build_global_discriminator(NetScale scale, int input_size, std::uint64_t seed)
{
    return make_network<T>(describe_global_discriminator(scale.base_width(), input_size), seed);
}

template <typename T>
Network<T> build_part_discriminator(NetScale scale, int part_size, std::uint64_t seed)
{
    return make_network<T>(describe_part_discriminator(scale.base_width(), part_size), seed);
}

template <typename T>
Network<T> build_feature_extractor(NetScale scale, int input_size, std::uint64_t seed)
{
    Network<T> net = make_network<T>(describe_feature_extractor(scale.base_width(), input_size), seed);
    net.set_trainable(false);
    return net;
}

template <typename T>
ForwardResult<T> forward(const Network<T>& net, const Var<T>& input, const ForwardOptions& options)
{
    const Architecture& arch = net.arch;
    const Shape expected{arch.in_channels, arch.input_size, arch.input_size};
    if (input.shape() != expected) {
        throw DimensionError(arch.name + ": expected input " + shape_str(expected) + ", got " +
                             shape_str(input.shape()));
    }
    ForwardResult<T> result;
    std::vector<Var<T>> slots;
    Var<T> x = input;
    for (std::size_t i = 0; i < arch.layers.size(); ++i) {
        const LayerSpec& l = arch.layers[i];
        const int off = net.layer_offset[i];
        switch (l.kind) {
        case LayerKind::Conv:
            x = ag::conv2d(x, net.params[off], net.params[off + 1], l.stride, l.pad);
            break;
        case LayerKind::TransConv:
            x = ag::conv_transpose2d(x, net.params[off], net.params[off + 1], l.stride, l.pad);
            break;
        case LayerKind::Norm:
            x = ag::instance_norm(x, net.params[off], net.params[off + 1], static_cast<T>(kNormEps));
            break;
        case LayerKind::Act:
            switch (l.act) {
            case Activation::ReLU:
                x = ag::relu(x);
                break;
            case Activation::LeakyReLU:
                x = ag::leaky_relu(x, static_cast<T>(kLeakySlope));
                break;
            case Activation::Tanh:
                x = ag::tanh(x);
                break;
            case Activation::Sigmoid:
                x = ag::sigmoid(x);
                break;
            case Activation::None:
                break;
            }
            break;
        case LayerKind::Dropout:
            if (options.train && l.p > 0.0) {
                std::mt19937_64 rng(mix_seed(options.dropout_seed, i));
                std::bernoulli_distribution keep(1.0 - l.p);
                const T s = static_cast<T>(1.0 / (1.0 - l.p));
                Tensor<T> mask(x.shape());
                for (auto& v : mask.vec()) {
                    v = keep(rng) ? s : T(0);
                }
                x = ag::mul(x, Var<T>::constant(std::move(mask)));
            }
            break;
        case LayerKind::SaveSkip:
            if (static_cast<int>(slots.size()) <= l.skip_slot) {
                slots.resize(l.skip_slot + 1);
            }
            slots[l.skip_slot] = x;
            break;
        case LayerKind::ConcatSkip: {
            Var<T> skip = slots.at(l.skip_slot);
            if (options.sever_skips) {
                skip = Var<T>::constant(Tensor<T>(skip.shape()));
            }
            x = ag::concat_channels(x, skip);
            break;
        }
        case LayerKind::Tap:
            result.tap = ag::slice_channels(x, 0, l.out_channels);
            break;
        case LayerKind::Clamp:
            x = ag::clamp(x, static_cast<T>(l.lo), static_cast<T>(l.hi));
            break;
        }
    }
    result.output = x;
    return result;
}

std::array<PartBox, 4> part_boxes(const LandmarkSet& lm, const PartLayout& layout)
{
    std::array<PartBox, 4> boxes;
    for (std::size_t p = 0; p < 4; ++p) {
        const auto& group = layout.groups[p];
        if (group.empty()) {
            throw ValidationError("part layout has an empty landmark group");
        }
        double sx = 0.0, sy = 0.0;
        double x_min = 1e300, x_max = -1e300, y_min = 1e300, y_max = -1e300;
        for (int idx : group) {
            const auto [x, y] = lm.pts.at(static_cast<std::size_t>(idx));
            sx += x;
            sy += y;
            x_min = std::min(x_min, x);
            x_max = std::max(x_max, x);
            y_min = std::min(y_min, y);
            y_max = std::max(y_max, y);
        }
        const double n = static_cast<double>(group.size());
        const double spread = std::max(x_max - x_min, y_max - y_min);
        boxes[p] = {sx / n, sy / n, std::max(kPartSpreadFactor * spread, kPartMinSide)};
    }
    return boxes;
}

template <typename T>
std::array<Var<T>, 4> crop_parts(const Var<T>& img, const LandmarkSet& lm, const PartLayout& layout, int part_size)
{
    const auto& s = img.shape();
    if (s.size() != 3) {
        throw DimensionError("crop_parts: expected C x H x W image");
    }
    const int h = s[1], w = s[2];
    for (const auto& [x, y] : lm.pts) {
        if (!(x >= 0.0 && x <= w - 1 && y >= 0.0 && y <= h - 1)) {
            throw DomainError("crop_parts: landmark outside the image");
        }
    }
    const std::array<PartBox, 4> boxes = part_boxes(lm, layout);
    std::array<Var<T>, 4> crops;
    const double denom = part_size > 1 ? part_size - 1 : 1;
    for (std::size_t p = 0; p < 4; ++p) {
        const PartBox& b = boxes[p];
        Tensor<T> grid(Shape{2, part_size, part_size});
        for (int i = 0; i < part_size; ++i) {
            for (int j = 0; j < part_size; ++j) {
                const double px = b.cx + (j / denom - 0.5) * b.side;
                const double py = b.cy + (i / denom - 0.5) * b.side;
                grid.at(0, i, j) = static_cast<T>(2.0 * px / (w - 1) - 1.0);
                grid.at(1, i, j) = static_cast<T>(2.0 * py / (h - 1) - 1.0);
            }
        }
        crops[p] = ag::grid_sample(img, Var<T>::constant(std::move(grid)));
    }
    return crops;
}

#define MIRRORFILL_INSTANTIATE_NET(T)                                                                  \
    template struct Network<T>;                                                                        \
    template Network<T> make_network(const Architecture&, std::uint64_t);                              \
    template Network<T> build_flownet(NetScale, int, std::uint64_t);                                  \
    template Network<T> build_lightnet(NetScale, int, std::uint64_t);                                 \
    template Network<T> build_recnet(NetScale, int, int, std::uint64_t);                              \
    template Network<T> build_global_discriminator(NetScale, int, std::uint64_t);                     \
    template Network<T> build_part_discriminator(NetScale, int, std::uint64_t);                       \
    template Network<T> build_feature_extractor(NetScale, int, std::uint64_t);                        \
    template ForwardResult<T> forward(const Network<T>&, const Var<T>&, const ForwardOptions&);        \
    template std::array<Var<T>, 4> crop_parts(const Var<T>&, const LandmarkSet&, const PartLayout&, int);

MIRRORFILL_INSTANTIATE_NET(float)
MIRRORFILL_INSTANTIATE_NET(double)

}  // namespace mirrorfill
