// Copyright Contributors to the DiscSplat Project
// SPDX-License-Identifier: Apache-2.0

#include "discsplat/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <vector>

namespace discsplat {

namespace {

struct FileCloser {
    void operator()(std::FILE *f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

unsigned char to_byte(double v) {
    const double c = std::clamp(v, 0.0, 1.0);
    return static_cast<unsigned char>(std::lround(c * 255.0));
}

} // namespace

Image read_png(const std::filesystem::path &path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw ImageIoError("cannot open '" + path.string() + "'");
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
        throw ImageIoError("'" + path.string() + "' is not a PNG file");
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw ImageIoError("libpng initialization failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw ImageIoError("libpng initialization failed");
    }
    Image out;
    std::vector<unsigned char> pixels;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ImageIoError("corrupt PNG '" + path.string() + "'");
    }
    png_init_io(png, f.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    const png_byte color = png_get_color_type(png, info);
    const png_byte depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    const std::size_t stride = png_get_rowbytes(png, info);
    pixels.resize(stride * h);
    rows.resize(h);
    for (int y = 0; y < h; ++y) rows[y] = pixels.data() + stride * y;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    out = Image(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) out.at(x, y, c) = rows[y][3 * x + c] / 255.0;
    return out;
}

void write_png(const Image &image, const std::filesystem::path &path) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw ImageIoError("cannot write '" + path.string() + "'");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw ImageIoError("libpng initialization failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw ImageIoError("libpng initialization failed");
    }
    const int w = image.width();
    const int h = image.height();
    std::vector<unsigned char> pixels(static_cast<std::size_t>(w) * h * 3);
    for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = to_byte(image.data()[i]);
    std::vector<png_bytep> rows(h);
    for (int y = 0; y < h; ++y) rows[y] = pixels.data() + static_cast<std::size_t>(y) * w * 3;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw ImageIoError("failed writing '" + path.string() + "'");
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, w, h, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Image quantize8(const Image &image) {
    Image out(image.width(), image.height());
    for (std::size_t i = 0; i < out.data().size(); ++i) out.data()[i] = to_byte(image.data()[i]) / 255.0;
    return out;
}

namespace {

void put_u32(std::ostream &os, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char *>(b), 4);
}

std::uint32_t get_u32(std::istream &is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char *>(b), 4)) throw ImageIoError("truncated float dump");
    return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

} // namespace

void write_float_dump(const Image &image, const std::filesystem::path &path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ImageIoError("cannot write '" + path.string() + "'");
    os.write("DSPF", 4);
    put_u32(os, static_cast<std::uint32_t>(image.width()));
    put_u32(os, static_cast<std::uint32_t>(image.height()));
    put_u32(os, 3);
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < image.height(); ++y) {
            for (int x = 0; x < image.width(); ++x) {
                put_u32(os, std::bit_cast<std::uint32_t>(static_cast<float>(image.at(x, y, c))));
            }
        }
    }
    if (!os) throw ImageIoError("failed writing '" + path.string() + "'");
}

Image read_float_dump(const std::filesystem::path &path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ImageIoError("cannot open '" + path.string() + "'");
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "DSPF", 4) != 0) {
        throw ImageIoError("'" + path.string() + "' is not a float dump");
    }
    const std::uint32_t w = get_u32(is);
    const std::uint32_t h = get_u32(is);
    const std::uint32_t channels = get_u32(is);
    if (channels != 3 || w > (1u << 16) || h > (1u << 16)) throw ImageIoError("unsupported float dump header");
    Image out(static_cast<int>(w), static_cast<int>(h));
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < out.height(); ++y)
            for (int x = 0; x < out.width(); ++x) out.at(x, y, c) = std::bit_cast<float>(get_u32(is));
    return out;
}

} // namespace discsplat
