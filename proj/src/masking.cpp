#include "mirrorfill/masking.hpp"

#include <cmath>
#include <random>

#include "mirrorfill/geometry.hpp"
#include "mirrorfill/strokes.hpp"

namespace mirrorfill {

template <typename T>
void require_binary(const Tensor<T>& m, const char* what)
{
    for (T v : m.vec()) {
        if (v != T(0) && v != T(1)) {
            throw ValidationError(std::string(what) + ": mask must be binary (0 or 1)");
        }
    }
}

template <typename T>
Var<T> make_s1(const Var<T>& m_warp, const Var<T>& m)
{
    require_same_shape(m_warp.value(), m.value(), "make_s1");
    require_binary(m.value(), "make_s1");
    return ag::mul(m_warp, ag::one_minus(m));
}

template <typename T>
Var<T> make_s2(const Var<T>& m, const Var<T>& s1)
{
    require_same_shape(m.value(), s1.value(), "make_s2");
    const Tensor<T>& mv = m.value();
    const Tensor<T>& sv = s1.value();
    for (std::size_t i = 0; i < mv.size(); ++i) {
        if (static_cast<double>(mv[i]) + static_cast<double>(sv[i]) > 1.0 + 1e-6) {
            throw ValidationError("make_s2: m + s1 exceeds 1 at element " + std::to_string(i));
        }
    }
    Var<T> raw = ag::sub(ag::one_minus(m), s1);
    // Entries below 1e-8 (including negative rounding dust) become exactly zero.
    bool dusty = false;
    for (T v : raw.value().vec()) {
        dusty = dusty || (v != T(0) && v < T(1e-8));
    }
    if (!dusty) {
        return raw;
    }
    return ag::mul(raw, Var<T>::constant(map(raw.value(), [](T v) { return v >= T(1e-8) ? T(1) : T(0); })));
}

template <typename T>
Tensor<T> binarize(const Tensor<T>& soft, T threshold)
{
    if (!(threshold > T(0) && threshold < T(1))) {
        throw ValidationError("binarize: threshold must lie in (0,1)");
    }
    return map(soft, [threshold](T v) { return v >= threshold ? T(1) : T(0); });
}

template <typename T>
MaskPair<T> make_mask_pair(const Tensor<T>& m, const Tensor<T>& flow, bool binarize_warp)
{
    require_binary(m, "make_mask_pair");
    MaskPair<T> out;
    out.m = m;
    out.m_flip = flip_horizontal(m);
    out.m_warp = warp_mask(Var<T>::constant(out.m_flip), Var<T>::constant(flow)).value();
    const Tensor<T> mw = binarize_warp ? binarize(out.m_warp, T(0.5)) : out.m_warp;
    Var<T> mv = Var<T>::constant(m);
    Var<T> s1 = make_s1(Var<T>::constant(mw), mv);
    out.s1 = s1.value();
    out.s2 = make_s2(mv, s1).value();
    return out;
}

Tensor<float> rect_hole_mask(int height, int width, int x0, int y0, int w, int h)
{
    Tensor<float> m(Shape{1, height, width}, 1.0f);
    for (int i = std::max(0, y0); i < std::min(height, y0 + h); ++i) {
        for (int j = std::max(0, x0); j < std::min(width, x0 + w); ++j) {
            m.at(0, i, j) = 0.0f;
        }
    }
    return m;
}

Tensor<float> random_rect_mask(std::uint64_t seed, int height, int width, double min_frac, double max_frac)
{
    if (!(min_frac > 0.0 && min_frac <= max_frac && max_frac <= kMaxHoleFraction)) {
        throw ValidationError("random_rect_mask: require 0 < min_frac <= max_frac <= 0.6");
    }
    if (height < 1 || width < 1) {
        throw ValidationError("random_rect_mask: image size must be positive");
    }
    const long total = static_cast<long>(height) * width;
    const long a_min = static_cast<long>(std::ceil(min_frac * total - 1e-9));
    const long a_max = static_cast<long>(std::floor(max_frac * total + 1e-9));
    if (a_min > a_max || a_min < 1) {
        throw ValidationError("random_rect_mask: no integer hole area within the requested fractions");
    }
    std::mt19937_64 rng(seed);
    const long area = std::uniform_int_distribution<long>(a_min, a_max)(rng);
    const double aspect = std::exp(std::uniform_real_distribution<double>(std::log(0.5), std::log(2.0))(rng));

    // Side-length rule: start from the rounded height for the drawn aspect and
    // walk outward to the nearest height admitting an in-range integer width.
    const int h0 = std::clamp(static_cast<int>(std::lround(std::sqrt(area * aspect))), 1, height);
    int hole_h = -1, hole_w = -1;
    for (int step = 0; step <= 2 * height && hole_h < 0; ++step) {
        const int h = h0 + ((step % 2) ? (step + 1) / 2 : -(step / 2));
        if (h < 1 || h > height) {
            continue;
        }
        const long w_lo = (a_min + h - 1) / h;
        const long w_hi = std::min<long>(width, a_max / h);
        if (w_lo <= w_hi) {
            hole_h = h;
            hole_w = static_cast<int>(std::clamp<long>(std::lround(static_cast<double>(area) / h), w_lo, w_hi));
        }
    }
    if (hole_h < 0) {
        throw ValidationError("random_rect_mask: hole does not fit the image");
    }
    const int y0 = std::uniform_int_distribution<int>(0, height - hole_h)(rng);
    const int x0 = std::uniform_int_distribution<int>(0, width - hole_w)(rng);
    return rect_hole_mask(height, width, x0, y0, hole_w, hole_h);
}

std::vector<Stroke> random_strokes(std::uint64_t seed, int height, int width, int stroke_count, int max_width)
{
    if (stroke_count < 1) {
        throw ValidationError("random_irregular_mask: stroke_count must be >= 1");
    }
    if (max_width < 1) {
        throw ValidationError("random_irregular_mask: max_width must be >= 1");
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double max_len = std::max(4.0, 0.25 * std::max(height, width));
    std::vector<Stroke> strokes(stroke_count);
    for (Stroke& s : strokes) {
        s.width = std::uniform_int_distribution<int>(1, max_width)(rng);
        const int segments = std::uniform_int_distribution<int>(1, 4)(rng);
        int x = std::uniform_int_distribution<int>(0, width - 1)(rng);
        int y = std::uniform_int_distribution<int>(0, height - 1)(rng);
        s.vertices.push_back({x, y});
        double angle = unit(rng) * 2.0 * M_PI;
        for (int k = 0; k < segments; ++k) {
            angle += (unit(rng) - 0.5) * M_PI;
            const double len = 3.0 + unit(rng) * (max_len - 3.0);
            const int nx = std::clamp(static_cast<int>(std::lround(x + len * std::cos(angle))), 0, width - 1);
            const int ny = std::clamp(static_cast<int>(std::lround(y + len * std::sin(angle))), 0, height - 1);
            if (nx == x && ny == y) {
                continue;
            }
            x = nx;
            y = ny;
            s.vertices.push_back({x, y});
        }
    }
    return strokes;
}

std::vector<std::pair<int, int>> lattice_path(std::pair<int, int> from, std::pair<int, int> to)
{
    // Walks one 4-neighbour step at a time, always taking the axis step that
    // keeps the walker closest to the ideal segment.
    std::vector<std::pair<int, int>> path{from};
    int x = from.first, y = from.second;
    const int dx = to.first - from.first, dy = to.second - from.second;
    const int sx = dx > 0 ? 1 : -1, sy = dy > 0 ? 1 : -1;
    const long adx = std::abs(dx), ady = std::abs(dy);
    long ix = 0, iy = 0;
    while (ix < adx || iy < ady) {
        // Compare (ix + 0.5) / adx with (iy + 0.5) / ady without division.
        if (iy >= ady || (ix < adx && (2 * ix + 1) * ady <= (2 * iy + 1) * adx)) {
            x += sx;
            ++ix;
        } else {
            y += sy;
            ++iy;
        }
        path.emplace_back(x, y);
    }
    return path;
}

Tensor<float> rasterize_stroke(const Stroke& stroke, int height, int width)
{
    Tensor<float> hole(Shape{1, height, width}, 0.0f);
    const int lo = -(stroke.width - 1) / 2;
    const int hi = lo + stroke.width - 1;
    auto stamp = [&](int cx, int cy) {
        for (int i = cy + lo; i <= cy + hi; ++i) {
            for (int j = cx + lo; j <= cx + hi; ++j) {
                if (i >= 0 && i < height && j >= 0 && j < width) {
                    hole.at(0, i, j) = 1.0f;
                }
            }
        }
    };
    stamp(stroke.vertices.front().first, stroke.vertices.front().second);
    for (std::size_t k = 1; k < stroke.vertices.size(); ++k) {
        for (const auto& [px, py] : lattice_path(stroke.vertices[k - 1], stroke.vertices[k])) {
            stamp(px, py);
        }
    }
    return hole;
}

Tensor<float> random_irregular_mask(std::uint64_t seed, int height, int width, int stroke_count, int max_width)
{
    Tensor<float> m(Shape{1, height, width}, 1.0f);
    for (const Stroke& s : random_strokes(seed, height, width, stroke_count, max_width)) {
        const Tensor<float> hole = rasterize_stroke(s, height, width);
        for (std::size_t i = 0; i < m.size(); ++i) {
            if (hole[i] > 0.0f) {
                m[i] = 0.0f;
            }
        }
    }
    return m;
}

#define MIRRORFILL_INSTANTIATE_MASK(T)                                                 \
    template void require_binary(const Tensor<T>&, const char*);                      \
    template Var<T> make_s1(const Var<T>&, const Var<T>&);                            \
    template Var<T> make_s2(const Var<T>&, const Var<T>&);                            \
    template Tensor<T> binarize(const Tensor<T>&, T);                                 \
    template MaskPair<T> make_mask_pair(const Tensor<T>&, const Tensor<T>&, bool);

MIRRORFILL_INSTANTIATE_MASK(float)
MIRRORFILL_INSTANTIATE_MASK(double)

}  // namespace mirrorfill
