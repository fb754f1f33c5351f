#pragma once

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

#include "warpkit/tensor.hpp"

// 8-bit PNG in/out. Images load as [3,H,W] floats in [0,1] (grayscale
// replicated to 3 channels); masks threshold at >= 128.

namespace warpkit {

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace detail

inline Tensor<float> load_image(const std::string& path) {
    detail::FilePtr fp(std::fopen(path.c_str(), "rb"));
    require(fp != nullptr, "load_image: cannot open " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    require(png != nullptr, "load_image: libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        fail("load_image: libpng info init failed");
    }
    std::vector<png_bytep> row_ptrs;
    std::vector<unsigned char> pixels;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail("load_image: " + path + " is not a valid PNG");
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    png_uint_32 w = png_get_image_width(png, info);
    png_uint_32 h = png_get_image_height(png, info);
    int depth = png_get_bit_depth(png, info);
    int color = png_get_color_type(png, info);
    if (depth == 16) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail("load_image: " + path + " has unsupported bit depth 16 (want 8-bit)");
    }
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    png_read_update_info(png, info);

    size_t rowbytes = png_get_rowbytes(png, info);
    require(rowbytes == static_cast<size_t>(w) * 3,
            "load_image: " + path + ": unexpected row layout");
    pixels.resize(static_cast<size_t>(h) * rowbytes);
    row_ptrs.resize(h);
    for (png_uint_32 y = 0; y < h; ++y) row_ptrs[y] = pixels.data() + y * rowbytes;
    png_read_image(png, row_ptrs.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Tensor<float> out({3, h, w});
    for (png_uint_32 y = 0; y < h; ++y)
        for (png_uint_32 x = 0; x < w; ++x)
            for (Index c = 0; c < 3; ++c)
                out.at3(c, y, x) = pixels[y * rowbytes + x * 3 + c] / 255.0f;
    return out;
}

// Binary mask: >= 128 in the first channel is foreground.
inline Tensor<float> load_mask(const std::string& path) {
    Tensor<float> img = load_image(path);
    Tensor<float> mask({img.dims[1], img.dims[2]});
    for (Index y = 0; y < mask.dims[0]; ++y)
        for (Index x = 0; x < mask.dims[1]; ++x)
            mask.at2(y, x) = img.at3(0, y, x) >= 128.0f / 255.0f ? 1.0f : 0.0f;
    return mask;
}

// Saves [3,H,W] as RGB or [1,H,W] / [H,W] as grayscale, clamped to [0,1].
inline void save_image(const Tensor<float>& img, const std::string& path) {
    Index channels, h, w;
    if (img.rank() == 3) {
        channels = img.dims[0];
        h = img.dims[1];
        w = img.dims[2];
        require(channels == 1 || channels == 3, "save_image: want 1 or 3 channels, got " +
                                                    std::to_string(channels));
    } else if (img.rank() == 2) {
        channels = 1;
        h = img.dims[0];
        w = img.dims[1];
    } else {
        fail("save_image: want [3,H,W], [1,H,W] or [H,W], got " + dims_str(img.dims));
    }

    detail::FilePtr fp(std::fopen(path.c_str(), "wb"));
    require(fp != nullptr, "save_image: cannot open " + path + " for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    require(png != nullptr, "save_image: libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        fail("save_image: libpng info init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail("save_image: write failed for " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    auto quantize = [](float v) {
        float c = std::clamp(v, 0.0f, 1.0f);
        return static_cast<unsigned char>(std::lround(c * 255.0f));
    };
    std::vector<unsigned char> row(w * channels);
    for (Index y = 0; y < h; ++y) {
        for (Index x = 0; x < w; ++x)
            for (Index c = 0; c < channels; ++c)
                row[x * channels + c] =
                    quantize(img.rank() == 2 ? img.at2(y, x) : img.at3(c, y, x));
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

// Align-corners bilinear resize for [C,H,W] tensors (ingest / person rep).
inline Tensor<float> bilinear_resize(const Tensor<float>& src, Index ho, Index wo) {
    require(src.rank() == 3, "bilinear_resize: want [C,H,W]");
    require(ho >= 1 && wo >= 1, "bilinear_resize: bad target size");
    Index c = src.dims[0], h = src.dims[1], w = src.dims[2];
    if (h == ho && w == wo) return src;
    Tensor<float> out({c, ho, wo});
    for (Index y = 0; y < ho; ++y) {
        double sy = ho == 1 ? 0.0 : static_cast<double>(y) * (h - 1) / (ho - 1);
        Index y0 = static_cast<Index>(sy);
        Index y1 = std::min(y0 + 1, h - 1);
        double fy = sy - static_cast<double>(y0);
        for (Index x = 0; x < wo; ++x) {
            double sx = wo == 1 ? 0.0 : static_cast<double>(x) * (w - 1) / (wo - 1);
            Index x0 = static_cast<Index>(sx);
            Index x1 = std::min(x0 + 1, w - 1);
            double fx = sx - static_cast<double>(x0);
            for (Index ci = 0; ci < c; ++ci) {
                double v = (1 - fy) * ((1 - fx) * src.at3(ci, y0, x0) + fx * src.at3(ci, y0, x1)) +
                           fy * ((1 - fx) * src.at3(ci, y1, x0) + fx * src.at3(ci, y1, x1));
                out.at3(ci, y, x) = static_cast<float>(v);
            }
        }
    }
    return out;
}

}  // namespace warpkit
