#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace sparsesplat {

/// Row-major, channel-interleaved image of doubles (H×W×C).
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h, int c, double fill = 0.0)
        : width(w), height(h), channels(c),
          data(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * static_cast<std::size_t>(c), fill) {}

    bool empty() const { return data.empty(); }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
    std::size_t index(int x, int y, int c = 0) const {
        return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) *
                   static_cast<std::size_t>(channels) +
               static_cast<std::size_t>(c);
    }
    double& at(int x, int y, int c = 0) { return data[index(x, y, c)]; }
    double at(int x, int y, int c = 0) const { return data[index(x, y, c)]; }

    bool same_shape(const Image& other) const {
        return width == other.width && height == other.height && channels == other.channels;
    }
};

/// Bilinear sample with pixel centers at integer coordinates; coordinates are
/// clamped to the image so border pixels extend outward.
void sample_bilinear(const Image& image, double u, double v, double* out);

/// Normalized 1D Gaussian taps for offsets -radius..radius.
std::vector<double> gaussian_kernel(double sigma, int radius);

/// Separable filtering along x then y. At the border the taps that fall
/// outside the image are dropped and the rest renormalized, so a constant
/// image stays constant.
Image filter_separable(const Image& image, const std::vector<double>& kernel);

/// Adjoint (transpose) of filter_separable, used to backpropagate through it.
Image filter_separable_adjoint(const Image& image, const std::vector<double>& kernel);

/// Rounds every value to the nearest multiple of 1/255 after clamping to [0,1].
void quantize_8bit(Image& image);

// PNG I/O. Reading yields RGB in [0,1] regardless of the stored format.
Image read_png(const std::filesystem::path& path);
void write_png_rgb8(const std::filesystem::path& path, const Image& rgb);
/// Single-channel 16-bit grayscale; values are clamped to [0,1] before scaling.
void write_png_gray16(const std::filesystem::path& path, const Image& gray);
/// Reads any PNG as a single-channel mask (nonzero luminance means inside).
std::vector<bool> read_png_mask(const std::filesystem::path& path, int& width, int& height);

} // namespace sparsesplat
