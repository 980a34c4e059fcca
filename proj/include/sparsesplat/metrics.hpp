#pragma once

#include "sparsesplat/image.hpp"

#include <vector>

namespace sparsesplat {

/// Reported for identical images.
inline constexpr double kPsnrCap = 100.0;

/// 10·log10(1/MSE), capped at kPsnrCap. With a mask (H·W flags) only pixels
/// inside it count.
double psnr(const Image& a, const Image& b, const std::vector<bool>* mask = nullptr);

/// Mean SSIM over pixels (per-pixel value averaged over channels), restricted
/// to the mask when one is given.
double ssim(const Image& a, const Image& b, const std::vector<bool>* mask = nullptr);

} // namespace sparsesplat
