#include "mirrorfill/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

namespace mirrorfill {
namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

File open_file(const std::filesystem::path& path, const char* mode)
{
    File f(std::fopen(path.string().c_str(), mode));
    if (!f) {
        throw ValidationError("cannot open " + path.string());
    }
    return f;
}

// Decodes to 8-bit grey or RGB; returns channel count.
int decode(const std::filesystem::path& path, std::vector<unsigned char>& pixels, int& height, int& width)
{
    File f = open_file(path, "rb");
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
        throw FormatError(path.string() + " is not a PNG file");
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw FormatError("libpng initialization failed");
    }
    // Declared before setjmp so a longjmp never skips its destructor.
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("corrupt PNG data in " + path.string());
    }
    png_init_io(png, f.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_packing(png);
    png_set_palette_to_rgb(png);
    if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) {
        png_set_expand_gray_1_2_4_to_8(png);
    }
    png_read_update_info(png, info);
    width = static_cast<int>(png_get_image_width(png, info));
    height = static_cast<int>(png_get_image_height(png, info));
    const int channels = png_get_channels(png, info);
    pixels.resize(static_cast<std::size_t>(width) * height * channels);
    rows.resize(height);
    for (int i = 0; i < height; ++i) {
        rows[i] = pixels.data() + static_cast<std::size_t>(i) * width * channels;
    }
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);
    return channels;
}

}  // namespace

Tensor<float> read_png(const std::filesystem::path& path)
{
    std::vector<unsigned char> px;
    int h = 0, w = 0;
    const int ch = decode(path, px, h, w);
    Tensor<float> out(Shape{3, h, w});
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            for (int c = 0; c < 3; ++c) {
                const int src = ch >= 3 ? c : 0;
                out.at(c, i, j) = px[(static_cast<std::size_t>(i) * w + j) * ch + src] / 255.0f;
            }
        }
    }
    return out;
}

Tensor<float> read_mask(const std::filesystem::path& path)
{
    std::vector<unsigned char> px;
    int h = 0, w = 0;
    const int ch = decode(path, px, h, w);
    Tensor<float> out(Shape{1, h, w});
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            const unsigned char* p = &px[(static_cast<std::size_t>(i) * w + j) * ch];
            const int grey = ch >= 3 ? (p[0] + p[1] + p[2]) / 3 : p[0];
            out.at(0, i, j) = grey >= 128 ? 1.0f : 0.0f;
        }
    }
    return out;
}

void write_png(const std::filesystem::path& path, const Tensor<float>& img)
{
    if (img.rank() != 3 || (img.channels() != 1 && img.channels() != 3)) {
        throw DimensionError("write_png: expected 1 or 3 channels, got " + shape_str(img.shape()));
    }
    const int h = img.height(), w = img.width(), ch = img.channels();
    std::vector<unsigned char> px(static_cast<std::size_t>(h) * w * ch);
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            for (int c = 0; c < ch; ++c) {
                const float v = std::clamp(img.at(c, i, j), 0.0f, 1.0f);
                px[(static_cast<std::size_t>(i) * w + j) * ch + c] = static_cast<unsigned char>(std::lround(v * 255.0f));
            }
        }
    }
    File f = open_file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw ValidationError("libpng initialization failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw ValidationError("failed writing " + path.string());
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, w, h, 8, ch == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int i = 0; i < h; ++i) {
        png_write_row(png, px.data() + static_cast<std::size_t>(i) * w * ch);
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace mirrorfill
