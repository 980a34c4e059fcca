#include "sparsesplat/metrics.hpp"

#include "sparsesplat/error.hpp"
#include "sparsesplat/losses.hpp"

#include <algorithm>
#include <cmath>

namespace sparsesplat {

namespace {

void check(const Image& a, const Image& b, const std::vector<bool>* mask) {
    if (!a.same_shape(b) || a.empty()) {
        throw Error(ErrorCode::ShapeMismatch, "metric inputs must be non-empty and share a shape");
    }
    if (mask && mask->size() != a.pixel_count()) {
        throw Error(ErrorCode::ShapeMismatch, "mask size differs from the image");
    }
}

} // namespace

double psnr(const Image& a, const Image& b, const std::vector<bool>* mask) {
    check(a, b, mask);
    double sum = 0.0;
    std::size_t count = 0;
    const auto channels = static_cast<std::size_t>(a.channels);
    for (std::size_t p = 0; p < a.pixel_count(); ++p) {
        if (mask && !(*mask)[p]) {
            continue;
        }
        for (std::size_t c = 0; c < channels; ++c) {
            const double d = a.data[p * channels + c] - b.data[p * channels + c];
            sum += d * d;
        }
        count += channels;
    }
    if (count == 0) {
        throw Error(ErrorCode::InvalidArgument, "mask selects no pixels");
    }
    const double mse = sum / static_cast<double>(count);
    if (mse <= 0.0) {
        return kPsnrCap;
    }
    return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

double ssim(const Image& a, const Image& b, const std::vector<bool>* mask) {
    check(a, b, mask);
    if (!mask) {
        return ssim_value(a, b);
    }
    const Image map = ssim_map(a, b);
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t p = 0; p < map.pixel_count(); ++p) {
        if ((*mask)[p]) {
            sum += map.data[p];
            ++count;
        }
    }
    if (count == 0) {
        throw Error(ErrorCode::InvalidArgument, "mask selects no pixels");
    }
    return sum / static_cast<double>(count);
}

} // namespace sparsesplat
