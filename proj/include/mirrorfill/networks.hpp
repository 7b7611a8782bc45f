#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mirrorfill/autograd.hpp"
#include "mirrorfill/geometry.hpp"

namespace mirrorfill {

enum class LayerKind { Conv, TransConv, Norm, Act, Dropout, SaveSkip, ConcatSkip, Tap, Clamp };

enum class Activation { None, ReLU, LeakyReLU, Tanh, Sigmoid };

/// One step of a network. Conv/TransConv use `out_channels`, `kernel`,
/// `stride`, `pad`; SaveSkip/ConcatSkip use `skip_slot`; Tap records the
/// first `out_channels` channels of the current activation; Clamp uses
/// [lo, hi].
struct LayerSpec {
    LayerKind kind = LayerKind::Act;
    int out_channels = 0;
    int kernel = 0;
    int stride = 1;
    int pad = 0;
    Activation act = Activation::None;
    int skip_slot = -1;
    double p = 0.0;  // dropout probability
    double lo = 0.0, hi = 0.0;
};

struct Architecture {
    std::string name;
    int in_channels = 3;
    int input_size = 64;
    std::vector<LayerSpec> layers;
    /// Extra bias added at init to the final (head) layer, e.g. 1 so an
    /// illumination ratio starts near unity.
    double head_bias = 0.0;
    double head_weight_scale = 1.0;
};

/// Width multiplier; only 1, 1/2, 1/4 and 1/8 of the reference widths exist.
struct NetScale {
    int divisor = 8;

    static NetScale from_fraction(double scale);
    int base_width() const { return 64 / divisor; }
};

/// Checks input_size is a power of two >= 32.
void validate_input_size(int input_size);

Architecture describe_flownet(int base_width, int input_size);
Architecture describe_lightnet(int base_width, int input_size);
/// `tap_level` l places the decoder tap at input_size / 2^l.
Architecture describe_recnet(int base_width, int input_size, int tap_level = 1, bool dropout = true);
Architecture describe_global_discriminator(int base_width, int input_size);
Architecture describe_part_discriminator(int base_width, int part_size);
/// Frozen perceptual stand-in: five Conv(4,2)+ReLU blocks, tapped at block 5.
Architecture describe_feature_extractor(int base_width, int input_size);

/// Output shape after every layer for the architecture's input size; throws
/// DimensionError where the arithmetic fails (e.g. input below receptive field).
std::vector<Shape> infer_shapes(const Architecture& arch);
Shape output_shape(const Architecture& arch);
/// Shape recorded by the Tap layer, if any (empty otherwise).
Shape tap_shape(const Architecture& arch);
std::size_t count_parameters(const Architecture& arch);

/// Architecture plus its named weights. Parameters are leaves; set
/// requires_grad off to freeze them.
template <typename T>
struct Network {
    Architecture arch;
    std::vector<std::string> names;
    std::vector<Var<T>> params;
    std::vector<int> layer_offset;  // index of the first param of each layer, -1 if none

    void set_trainable(bool on);
    void zero_grad();
    std::size_t numel() const;
};

/// Allocates and initializes (fan-in scaled normal, fixed seed) the weights.
template <typename T>
Network<T> make_network(const Architecture& arch, std::uint64_t seed);

template <typename T>
Network<T> build_flownet(NetScale scale, int input_size, std::uint64_t seed = 1);
template <typename T>
Network<T> build_lightnet(NetScale scale, int input_size, std::uint64_t seed = 2);
template <typename T>
Network<T> build_recnet(NetScale scale, int input_size, int tap_level = 1, std::uint64_t seed = 3);
template <typename T>
Network<T> build_global_discriminator(NetScale scale, int input_size, std::uint64_t seed = 4);
template <typename T>
Network<T> build_part_discriminator(NetScale scale, int part_size, std::uint64_t seed = 5);
template <typename T>
Network<T> build_feature_extractor(NetScale scale, int input_size, std::uint64_t seed = 1234);

struct ForwardOptions {
    bool train = false;
    std::uint64_t dropout_seed = 0;
    /// Concatenate zeros in place of encoder skips.
    bool sever_skips = false;
};

template <typename T>
struct ForwardResult {
    Var<T> output;
    Var<T> tap;  // undefined when the architecture has no Tap layer
};

template <typename T>
ForwardResult<T> forward(const Network<T>& net, const Var<T>& input, const ForwardOptions& options = {});

/// Landmark index groups for left eye, right eye, nose and mouth.
struct PartLayout {
    std::array<std::vector<int>, 4> groups;
};

struct PartBox {
    double cx = 0.0, cy = 0.0, side = 0.0;
};

inline constexpr double kPartSpreadFactor = 2.5;
inline constexpr double kPartMinSide = 16.0;

/// Square box per part: centred on the landmark centroid, side 2.5x the
/// larger extent of the part's landmark bounding box, at least 16 px.
std::array<PartBox, 4> part_boxes(const LandmarkSet& lm, const PartLayout& layout);

/// Bilinear crops of the four part boxes resized to part_size x part_size;
/// differentiable with respect to the image.
template <typename T>
std::array<Var<T>, 4> crop_parts(const Var<T>& img, const LandmarkSet& lm, const PartLayout& layout, int part_size);

}  // namespace mirrorfill
