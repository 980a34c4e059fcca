#include "sparsesplat/image.hpp"

#include "sparsesplat/error.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>

namespace sparsesplat {

void sample_bilinear(const Image& image, double u, double v, double* out) {
    const double x = std::clamp(u, 0.0, static_cast<double>(image.width - 1));
    const double y = std::clamp(v, 0.0, static_cast<double>(image.height - 1));
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const int x1 = std::min(x0 + 1, image.width - 1);
    const int y1 = std::min(y0 + 1, image.height - 1);
    const double fx = x - x0;
    const double fy = y - y0;
    for (int c = 0; c < image.channels; ++c) {
        const double top = (1.0 - fx) * image.at(x0, y0, c) + fx * image.at(x1, y0, c);
        const double bottom = (1.0 - fx) * image.at(x0, y1, c) + fx * image.at(x1, y1, c);
        out[c] = (1.0 - fy) * top + fy * bottom;
    }
}

std::vector<double> gaussian_kernel(double sigma, int radius) {
    std::vector<double> taps(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double w = std::exp(-0.5 * i * i / (sigma * sigma));
        taps[static_cast<std::size_t>(i + radius)] = w;
        sum += w;
    }
    for (double& w : taps) {
        w /= sum;
    }
    return taps;
}

namespace {

// One axis of the renormalized filter. `adjoint` applies the transpose.
void filter_axis(const Image& in, Image& out, const std::vector<double>& kernel, bool along_x, bool adjoint) {
    const int radius = static_cast<int>(kernel.size() / 2);
    const int len = along_x ? in.width : in.height;
    const std::size_t taps = kernel.size();
    // Taps renormalized by the in-bounds sum at each output position i.
    std::vector<double> weights(static_cast<std::size_t>(len) * taps, 0.0);
    for (int i = 0; i < len; ++i) {
        double norm = 0.0;
        for (int o = -radius; o <= radius; ++o) {
            if (i + o >= 0 && i + o < len) {
                norm += kernel[static_cast<std::size_t>(o + radius)];
            }
        }
        for (int o = -radius; o <= radius; ++o) {
            if (i + o >= 0 && i + o < len) {
                weights[static_cast<std::size_t>(i) * taps + static_cast<std::size_t>(o + radius)] =
                    kernel[static_cast<std::size_t>(o + radius)] / norm;
            }
        }
    }
    out = Image(in.width, in.height, in.channels);
    const std::size_t ch = static_cast<std::size_t>(in.channels);
    // Element stride between neighbours along the filtered axis.
    const std::ptrdiff_t step = along_x ? static_cast<std::ptrdiff_t>(ch)
                                        : static_cast<std::ptrdiff_t>(ch) * in.width;
    const double* src = in.data.data();
    double* dst = out.data.data();
    for (int y = 0; y < in.height; ++y) {
        for (int x = 0; x < in.width; ++x) {
            const int i = along_x ? x : y;
            const int lo = std::max(-radius, -i);
            const int hi = std::min(radius, len - 1 - i);
            const double* w = weights.data() + static_cast<std::size_t>(i) * taps + radius;
            const std::size_t base = (static_cast<std::size_t>(y) * in.width + x) * ch;
            for (std::size_t c = 0; c < ch; ++c) {
                if (!adjoint) {
                    double acc = 0.0;
                    for (int o = lo; o <= hi; ++o) {
                        acc += w[o] * src[static_cast<std::ptrdiff_t>(base + c) + o * step];
                    }
                    dst[base + c] = acc;
                } else {
                    // Scatter: out[j] += k/n_i · in[i].
                    const double v = src[base + c];
                    for (int o = lo; o <= hi; ++o) {
                        dst[static_cast<std::ptrdiff_t>(base + c) + o * step] += w[o] * v;
                    }
                }
            }
        }
    }
}

} // namespace

Image filter_separable(const Image& image, const std::vector<double>& kernel) {
    Image tmp;
    Image out;
    filter_axis(image, tmp, kernel, true, false);
    filter_axis(tmp, out, kernel, false, false);
    return out;
}

Image filter_separable_adjoint(const Image& image, const std::vector<double>& kernel) {
    Image tmp;
    Image out;
    filter_axis(image, tmp, kernel, false, true);
    filter_axis(tmp, out, kernel, true, true);
    return out;
}

void quantize_8bit(Image& image) {
    for (double& value : image.data) {
        value = std::round(std::clamp(value, 0.0, 1.0) * 255.0) / 255.0;
    }
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
    FilePtr file(std::fopen(path.c_str(), mode));
    if (!file) {
        throw Error(ErrorCode::IoError, "cannot open " + path.string());
    }
    return file;
}

void write_png(const std::filesystem::path& path, int width, int height, int color_type, int bit_depth,
               const std::vector<png_bytep>& rows) {
    FilePtr file = open_file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error(ErrorCode::IoError, "failed to encode " + path.string());
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth, color_type,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, const_cast<png_bytepp>(rows.data()));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

// Decodes to 8-bit RGBA regardless of the stored format.
std::vector<unsigned char> read_rgba8(const std::filesystem::path& path, int& width, int& height) {
    FilePtr file = open_file(path, "rb");
    std::vector<unsigned char> pixels;
    std::vector<png_bytep> rows;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error(ErrorCode::IoError, "failed to decode " + path.string());
    }
    png_init_io(png, file.get());
    png_read_info(png, info);
    width = static_cast<int>(png_get_image_width(png, info));
    height = static_cast<int>(png_get_image_height(png, info));
    const int color_type = png_get_color_type(png, info);
    const int bit_depth = png_get_bit_depth(png, info);
    if (bit_depth == 16) {
        png_set_strip_16(png);
    }
    if (color_type == PNG_COLOR_TYPE_PALETTE) {
        png_set_palette_to_rgb(png);
    }
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) {
        png_set_expand_gray_1_2_4_to_8(png);
    }
    if (png_get_valid(png, info, PNG_INFO_tRNS)) {
        png_set_tRNS_to_alpha(png);
    }
    if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) {
        png_set_gray_to_rgb(png);
    }
    if (color_type == PNG_COLOR_TYPE_RGB || color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_PALETTE) {
        png_set_filler(png, 0xFF, PNG_FILLER_AFTER);
    }
    png_read_update_info(png, info);
    pixels.resize(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 4);
    rows.resize(static_cast<std::size_t>(height));
    for (int y = 0; y < height; ++y) {
        rows[static_cast<std::size_t>(y)] = pixels.data() + static_cast<std::size_t>(y) * width * 4;
    }
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return pixels;
}

} // namespace

Image read_png(const std::filesystem::path& path) {
    int width = 0;
    int height = 0;
    const auto rgba = read_rgba8(path, width, height);
    Image image(width, height, 3);
    for (std::size_t p = 0; p < image.pixel_count(); ++p) {
        for (int c = 0; c < 3; ++c) {
            image.data[p * 3 + static_cast<std::size_t>(c)] = rgba[p * 4 + static_cast<std::size_t>(c)] / 255.0;
        }
    }
    return image;
}

std::vector<bool> read_png_mask(const std::filesystem::path& path, int& width, int& height) {
    const auto rgba = read_rgba8(path, width, height);
    std::vector<bool> mask(static_cast<std::size_t>(width) * static_cast<std::size_t>(height));
    for (std::size_t p = 0; p < mask.size(); ++p) {
        mask[p] = rgba[p * 4] != 0 || rgba[p * 4 + 1] != 0 || rgba[p * 4 + 2] != 0;
    }
    return mask;
}

void write_png_rgb8(const std::filesystem::path& path, const Image& rgb) {
    if (rgb.channels != 3 || rgb.empty()) {
        throw Error(ErrorCode::ShapeMismatch, "write_png_rgb8 expects a non-empty 3-channel image");
    }
    std::vector<unsigned char> bytes(rgb.data.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        bytes[i] = static_cast<unsigned char>(std::lround(std::clamp(rgb.data[i], 0.0, 1.0) * 255.0));
    }
    std::vector<png_bytep> rows(static_cast<std::size_t>(rgb.height));
    for (int y = 0; y < rgb.height; ++y) {
        rows[static_cast<std::size_t>(y)] = bytes.data() + static_cast<std::size_t>(y) * rgb.width * 3;
    }
    write_png(path, rgb.width, rgb.height, PNG_COLOR_TYPE_RGB, 8, rows);
}

void write_png_gray16(const std::filesystem::path& path, const Image& gray) {
    if (gray.channels != 1 || gray.empty()) {
        throw Error(ErrorCode::ShapeMismatch, "write_png_gray16 expects a non-empty 1-channel image");
    }
    // PNG stores 16-bit samples big-endian.
    std::vector<unsigned char> bytes(gray.data.size() * 2);
    for (std::size_t i = 0; i < gray.data.size(); ++i) {
        const auto v = static_cast<unsigned>(std::lround(std::clamp(gray.data[i], 0.0, 1.0) * 65535.0));
        bytes[2 * i] = static_cast<unsigned char>(v >> 8);
        bytes[2 * i + 1] = static_cast<unsigned char>(v & 0xFF);
    }
    std::vector<png_bytep> rows(static_cast<std::size_t>(gray.height));
    for (int y = 0; y < gray.height; ++y) {
        rows[static_cast<std::size_t>(y)] = bytes.data() + static_cast<std::size_t>(y) * gray.width * 2;
    }
    write_png(path, gray.width, gray.height, PNG_COLOR_TYPE_GRAY, 16, rows);
}

} // namespace sparsesplat
