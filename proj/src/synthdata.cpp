#include "mirrorfill/synthdata.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "mirrorfill/masking.hpp"

namespace mirrorfill {
namespace {

constexpr std::uint64_t kSplitWidth = 100000;
constexpr double kGainEdge = 0.35;  // logistic width of the left/right gain step, px

struct Rgb {
    double r, g, b;
};

struct Blob {
    double cx, cy, ax, ay;  // centre and semi-axes, px
    double edge;             // relative soft-edge width
    Rgb color;
};

struct FaceLayout {
    Rgb background;
    std::vector<Blob> blobs;  // painted in order, on the right half (x >= centre) only
    double cx, cy;
    double face_ax, face_ay;
    double eye_dx;
    int eye_y;
    double eye_half;
    int nose_y;
    double mouth_half;
    int mouth_y;
};

double smoothstep(double e0, double e1, double x)
{
    const double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
}

// Colour of the symmetric base at a real-valued position.
Rgb base_color(const FaceLayout& f, double x, double y)
{
    const double xf = f.cx + std::abs(x - f.cx);
    Rgb c = f.background;
    for (const Blob& b : f.blobs) {
        const double dx = (xf - b.cx) / b.ax, dy = (y - b.cy) / b.ay;
        const double r = std::sqrt(dx * dx + dy * dy);
        const double a = 1.0 - smoothstep(1.0 - b.edge, 1.0, r);
        if (a > 0.0) {
            c.r += a * (b.color.r - c.r);
            c.g += a * (b.color.g - c.g);
            c.b += a * (b.color.b - c.b);
        }
    }
    return c;
}

FaceLayout random_layout(std::mt19937_64& rng, int size)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto in = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
    const double s = size;
    FaceLayout f;
    f.cx = (s - 1) / 2.0;
    f.cy = (s - 1) / 2.0 + in(-0.03, 0.03) * s;
    f.background = {in(0.05, 0.35), in(0.05, 0.35), in(0.05, 0.35)};
    const Rgb skin{in(0.55, 0.9), in(0.4, 0.75), in(0.3, 0.65)};
    f.face_ax = in(0.24, 0.28) * s;
    f.face_ay = in(0.32, 0.38) * s;
    f.blobs.push_back({f.cx, f.cy, f.face_ax, f.face_ay, 0.12, skin});

    f.eye_dx = in(0.10, 0.13) * s;
    f.eye_y = static_cast<int>(std::lround(f.cy - in(0.08, 0.12) * s));
    f.eye_half = in(0.05, 0.065) * s;
    const double eye_ay = f.eye_half * in(0.45, 0.6);
    const Rgb sclera{in(0.85, 1.0), in(0.85, 1.0), in(0.85, 1.0)};
    const Rgb iris{in(0.05, 0.4), in(0.05, 0.4), in(0.1, 0.5)};
    f.blobs.push_back({f.cx + f.eye_dx, static_cast<double>(f.eye_y), f.eye_half, eye_ay, 0.3, sclera});
    f.blobs.push_back({f.cx + f.eye_dx, static_cast<double>(f.eye_y), eye_ay * 0.8, eye_ay * 0.8, 0.3, iris});
    const Rgb brow{skin.r * 0.4, skin.g * 0.35, skin.b * 0.3};
    f.blobs.push_back({f.cx + f.eye_dx, f.eye_y - eye_ay * 2.2, f.eye_half * 1.1, eye_ay * 0.45, 0.4, brow});

    f.nose_y = static_cast<int>(std::lround(f.cy + in(0.03, 0.07) * s));
    const Rgb nose{skin.r * 0.8, skin.g * 0.75, skin.b * 0.75};
    f.blobs.push_back({f.cx, f.nose_y - 0.04 * s, 0.035 * s, 0.08 * s, 0.5, nose});

    f.mouth_y = static_cast<int>(std::lround(f.cy + in(0.17, 0.21) * s));
    f.mouth_half = in(0.07, 0.1) * s;
    const Rgb lips{in(0.5, 0.8), in(0.1, 0.3), in(0.15, 0.35)};
    f.blobs.push_back({f.cx, static_cast<double>(f.mouth_y), f.mouth_half, in(0.02, 0.035) * s, 0.35, lips});
    return f;
}

// Half-pixel-quantized row offset, so the mirror flow has integer offsets.
double row_shift(double shear, double cy, int y)
{
    return std::round(2.0 * shear * (y - cy)) / 2.0;
}

std::uint64_t mix(std::uint64_t seed, std::uint64_t salt)
{
    std::uint64_t z = seed * 0x9E3779B97F4A7C15ULL + salt + 0x632BE59BD9B4E019ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace

SyntheticFaceSample generate_face(std::uint64_t seed, int size, const Asymmetry& asym, int landmark_count)
{
    if (size < 32) {
        throw ValidationError("generate_face: size must be >= 32, got " + std::to_string(size));
    }
    if (landmark_count < kDefaultLandmarkCount) {
        throw ValidationError("generate_face: at least 10 landmarks are required");
    }
    if (!(std::abs(asym.illum_delta) < 1.0) || !(std::abs(asym.shear) <= 0.1)) {
        throw ValidationError("generate_face: need |illum_delta| < 1 and |shear| <= 0.1");
    }
    std::mt19937_64 rng(seed);
    const FaceLayout f = random_layout(rng, size);
    const double g_left = asym.illum_delta > 0 ? 1.0 - asym.illum_delta : 1.0;
    const double g_right = asym.illum_delta < 0 ? 1.0 + asym.illum_delta : 1.0;

    SyntheticFaceSample out;
    out.seed = seed;
    out.shear = asym.shear;
    out.illum_gain = {g_left, g_right};
    out.image = Tensor<float>(Shape{3, size, size});
    out.unlit = Tensor<float>(Shape{3, size, size});
    out.mirror_flow = Tensor<float>(Shape{2, size, size});
    const double last = size - 1;
    for (int y = 0; y < size; ++y) {
        const double d = row_shift(asym.shear, f.cy, y);
        for (int x = 0; x < size; ++x) {
            const Rgb c = base_color(f, x - d, y);
            const double g = g_left + (g_right - g_left) / (1.0 + std::exp(-(x - f.cx) / kGainEdge));
            const std::array<double, 3> ch = {c.r, c.g, c.b};
            for (int k = 0; k < 3; ++k) {
                out.unlit.at(k, y, x) = static_cast<float>(ch[k]);
                out.image.at(k, y, x) = static_cast<float>(ch[k] * g);
            }
            const double tx = std::clamp(x - 2.0 * d, 0.0, last);
            out.mirror_flow.at(0, y, x) = static_cast<float>(2.0 * tx / last - 1.0);
            out.mirror_flow.at(1, y, x) = static_cast<float>(2.0 * y / last - 1.0);
        }
    }

    // Base (unsheared) positions; mirror pairs share a row.
    std::vector<std::pair<double, int>> base;
    const double ex = f.eye_dx, eh = f.eye_half;
    base = {{f.cx - ex, f.eye_y},      {f.cx + ex, f.eye_y},      {f.cx - ex - eh, f.eye_y},
            {f.cx - ex + eh, f.eye_y}, {f.cx + ex - eh, f.eye_y}, {f.cx + ex + eh, f.eye_y},
            {f.cx, f.nose_y},          {f.cx - f.mouth_half, f.mouth_y}, {f.cx + f.mouth_half, f.mouth_y},
            {f.cx, f.mouth_y}};
    std::vector<int> perm = {1, 0, 5, 4, 3, 2, 6, 8, 7, 9};
    // Extra points: mirrored pairs on the face outline, then one chin point.
    const int extra = landmark_count - kDefaultLandmarkCount;
    const int pairs = extra / 2;
    for (int p = 0; p < pairs; ++p) {
        const double t = -0.8 + 1.6 * (p + 0.5) / pairs;
        const int y = static_cast<int>(std::lround(f.cy + t * f.face_ay * 0.9));
        const double r = (y - f.cy) / f.face_ay;
        const double half = 0.85 * f.face_ax * std::sqrt(std::max(0.0, 1.0 - r * r));
        const int i = static_cast<int>(base.size());
        base.push_back({f.cx - half, y});
        base.push_back({f.cx + half, y});
        perm.push_back(i + 1);
        perm.push_back(i);
    }
    if (extra % 2 == 1) {
        perm.push_back(static_cast<int>(base.size()));
        base.push_back({f.cx, static_cast<int>(std::lround(f.cy + 0.85 * f.face_ay))});
    }
    for (const auto& [bx, by] : base) {
        out.landmarks.pts.emplace_back(bx + row_shift(asym.shear, f.cy, by), static_cast<double>(by));
    }
    out.landmarks.flip_perm = std::move(perm);
    return out;
}

PartLayout face_part_layout()
{
    PartLayout p;
    p.groups = {std::vector<int>{0, 2, 3}, std::vector<int>{1, 4, 5}, std::vector<int>{6},
                std::vector<int>{7, 8, 9}};
    return p;
}

Tensor<float> apply_occlusion(const Tensor<float>& image, const Tensor<float>& mask)
{
    if (image.rank() != 3 || mask.shape() != Shape{1, image.height(), image.width()}) {
        throw DimensionError("apply_occlusion: mask " + shape_str(mask.shape()) + " does not match image " +
                             shape_str(image.shape()));
    }
    require_binary(mask, "apply_occlusion");
    Tensor<float> out(image.shape());
    for (int c = 0; c < image.channels(); ++c) {
        for (int i = 0; i < image.height(); ++i) {
            for (int j = 0; j < image.width(); ++j) {
                out.at(c, i, j) = mask.at(0, i, j) != 0.0f ? image.at(c, i, j) : kHoleFill;
            }
        }
    }
    return out;
}

Tensor<float> exact_mirror_flow(const SyntheticFaceSample& sample)
{
    return sample.mirror_flow;
}

Tensor<float> part_hole_mask(const SyntheticFaceSample& sample, int part, double grow)
{
    if (part < 0 || part > 3) {
        throw ValidationError("part_hole_mask: part index must be in [0, 3]");
    }
    const int s = sample.image.height();
    const PartBox b = part_boxes(sample.landmarks, face_part_layout())[part];
    const double side = b.side * grow;
    const int x0 = static_cast<int>(std::floor(b.cx - side / 2.0));
    const int y0 = static_cast<int>(std::floor(b.cy - side / 2.0));
    const int w = static_cast<int>(std::ceil(side));
    return rect_hole_mask(s, s, x0, y0, w, w);
}

Tensor<float> left_eye_hole_mask(const SyntheticFaceSample& sample)
{
    const int s = sample.image.height();
    const LandmarkSet& lm = sample.landmarks;
    const double eh = (lm.pts[3].first - lm.pts[2].first) / 2.0;
    const double cx = lm.pts[0].first, cy = lm.pts[0].second;
    // Eye plus brow; stops short of the midline.
    const int x0 = static_cast<int>(std::floor(cx - 1.5 * eh));
    const int x1 = std::min(static_cast<int>(std::ceil(cx + 1.5 * eh)), s / 2 - 2);
    const int y0 = static_cast<int>(std::floor(cy - 1.6 * eh));
    const int y1 = static_cast<int>(std::ceil(cy + 1.0 * eh));
    return rect_hole_mask(s, s, x0, y0, x1 - x0 + 1, y1 - y0 + 1);
}

std::uint64_t split_seed(Split split, std::uint64_t index)
{
    if (index >= kSplitWidth) {
        throw ValidationError("split_seed: index " + std::to_string(index) + " exceeds the split width");
    }
    const std::uint64_t base = split == Split::Train ? 0 : split == Split::Validation ? kSplitWidth : 2 * kSplitWidth;
    return base + index;
}

Asymmetry random_asymmetry(std::uint64_t seed)
{
    std::mt19937_64 rng(mix(seed, 1));
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Asymmetry a;
    a.illum_delta = 0.4 * u(rng);
    a.shear = 0.08 * u(rng);
    return a;
}

Tensor<float> random_training_mask(std::uint64_t seed, const SyntheticFaceSample& sample)
{
    const int s = sample.image.height();
    std::mt19937_64 rng(mix(seed, 2));
    std::uniform_int_distribution<int> kind(0, 3);
    const std::uint64_t sub = mix(seed, 3);
    switch (kind(rng)) {
    case 0:
        return random_rect_mask(sub, s, s, 0.05, 0.25);
    case 1:
        return random_irregular_mask(sub, s, s, 4, std::max(2, s / 16));
    case 2:
        return left_eye_hole_mask(sample);
    default: {
        std::uniform_int_distribution<int> part(0, 3);
        std::uniform_real_distribution<double> grow(0.8, 1.3);
        return part_hole_mask(sample, part(rng), grow(rng));
    }
    }
}

}  // namespace mirrorfill
