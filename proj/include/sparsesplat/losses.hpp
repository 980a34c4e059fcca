#pragma once

#include "sparsesplat/image.hpp"

#include <vector>

namespace sparsesplat {

inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;
inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

/// Mean SSIM over all pixels and channels (11×11 Gaussian window, σ = 1.5,
/// renormalized at the border). When `grad_a` is non-null it receives ∂SSIM/∂a.
double ssim_value(const Image& a, const Image& b, Image* grad_a = nullptr);

/// Per-pixel SSIM averaged over channels (H×W×1).
Image ssim_map(const Image& a, const Image& b);

struct LossBreakdown {
    double photometric = 0.0;
    double eadr = 0.0;        // already multiplied by eadr_weight
    double eadr_weight = 0.0;
    double total = 0.0;
};

/// (1-λ)·L1 + λ·(1-SSIM)/2. Throws ShapeMismatch.
double photometric_loss(const Image& rendered, const Image& target, double lambda_dssim = 0.2,
                        Image* grad_rendered = nullptr);

/// Edge-aware depth smoothness: (1/(H·W)) Σ |∂x D| e^{-β|∂x I|} + |∂y D| e^{-β|∂y I|}
/// with forward differences and |∂I| the mean absolute difference over the
/// color channels. `grad_depth` (H×W×1) receives ∂L/∂D when non-null.
double eadr_loss(const Image& depth, const Image& image, double beta = 2.0, Image* grad_depth = nullptr);

/// 0 before (T-1)·i_step, 1 from then on.
double eadr_weight(long iter, int total_prune_steps, int i_step);

} // namespace sparsesplat
