#include "sparsesplat/losses.hpp"

#include "sparsesplat/error.hpp"

#include <cmath>

namespace sparsesplat {

namespace {

struct SsimStats {
    Image mu_a, mu_b, e_aa, e_bb, e_ab;
};

SsimStats local_stats(const Image& a, const Image& b, const std::vector<double>& kernel) {
    Image aa(a.width, a.height, a.channels), bb = aa, ab = aa;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        aa.data[i] = a.data[i] * a.data[i];
        bb.data[i] = b.data[i] * b.data[i];
        ab.data[i] = a.data[i] * b.data[i];
    }
    return {filter_separable(a, kernel), filter_separable(b, kernel), filter_separable(aa, kernel),
            filter_separable(bb, kernel), filter_separable(ab, kernel)};
}

const std::vector<double>& ssim_kernel() {
    static const std::vector<double> kernel = gaussian_kernel(kSsimSigma, kSsimWindow / 2);
    return kernel;
}

void require_same_shape(const Image& a, const Image& b) {
    if (!a.same_shape(b) || a.empty()) {
        throw Error(ErrorCode::ShapeMismatch, "images must be non-empty and share a shape");
    }
}

} // namespace

double ssim_value(const Image& a, const Image& b, Image* grad_a) {
    require_same_shape(a, b);
    const auto& kernel = ssim_kernel();
    const SsimStats st = local_stats(a, b, kernel);
    const double n = static_cast<double>(a.data.size());
    Image d_mu(a.width, a.height, a.channels), d_eaa = d_mu, d_eab = d_mu;
    double total = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double ma = st.mu_a.data[i], mb = st.mu_b.data[i];
        const double a1 = 2.0 * ma * mb + kSsimC1;
        const double a2 = 2.0 * (st.e_ab.data[i] - ma * mb) + kSsimC2;
        const double b1 = ma * ma + mb * mb + kSsimC1;
        const double b2 = (st.e_aa.data[i] - ma * ma) + (st.e_bb.data[i] - mb * mb) + kSsimC2;
        const double s = a1 * a2 / (b1 * b2);
        total += s;
        if (grad_a) {
            d_mu.data[i] = (2.0 * mb * a2 - 2.0 * mb * a1) / (b1 * b2) - s * (2.0 * ma / b1 - 2.0 * ma / b2);
            d_eaa.data[i] = -s / b2;
            d_eab.data[i] = 2.0 * a1 / (b1 * b2);
        }
    }
    if (grad_a) {
        const Image g_mu = filter_separable_adjoint(d_mu, kernel);
        const Image g_eaa = filter_separable_adjoint(d_eaa, kernel);
        const Image g_eab = filter_separable_adjoint(d_eab, kernel);
        *grad_a = Image(a.width, a.height, a.channels);
        for (std::size_t i = 0; i < a.data.size(); ++i) {
            grad_a->data[i] = (g_mu.data[i] + 2.0 * a.data[i] * g_eaa.data[i] + b.data[i] * g_eab.data[i]) / n;
        }
    }
    return total / n;
}

Image ssim_map(const Image& a, const Image& b) {
    require_same_shape(a, b);
    const SsimStats st = local_stats(a, b, ssim_kernel());
    Image out(a.width, a.height, 1);
    for (std::size_t p = 0; p < a.pixel_count(); ++p) {
        double sum = 0.0;
        for (int c = 0; c < a.channels; ++c) {
            const std::size_t i = p * static_cast<std::size_t>(a.channels) + static_cast<std::size_t>(c);
            const double ma = st.mu_a.data[i], mb = st.mu_b.data[i];
            const double num = (2.0 * ma * mb + kSsimC1) * (2.0 * (st.e_ab.data[i] - ma * mb) + kSsimC2);
            const double den = (ma * ma + mb * mb + kSsimC1) *
                               ((st.e_aa.data[i] - ma * ma) + (st.e_bb.data[i] - mb * mb) + kSsimC2);
            sum += num / den;
        }
        out.data[p] = sum / a.channels;
    }
    return out;
}

double photometric_loss(const Image& rendered, const Image& target, double lambda_dssim, Image* grad_rendered) {
    require_same_shape(rendered, target);
    if (lambda_dssim < 0.0 || lambda_dssim > 1.0) {
        throw Error(ErrorCode::InvalidArgument, "lambda_dssim must lie in [0,1]");
    }
    const double n = static_cast<double>(rendered.data.size());
    double l1 = 0.0;
    for (std::size_t i = 0; i < rendered.data.size(); ++i) {
        l1 += std::abs(rendered.data[i] - target.data[i]);
    }
    l1 /= n;
    double ssim = 1.0;
    Image ssim_grad;
    if (lambda_dssim > 0.0) {
        ssim = ssim_value(rendered, target, grad_rendered ? &ssim_grad : nullptr);
    }
    if (grad_rendered) {
        *grad_rendered = Image(rendered.width, rendered.height, rendered.channels);
        for (std::size_t i = 0; i < rendered.data.size(); ++i) {
            const double diff = rendered.data[i] - target.data[i];
            const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
            double g = (1.0 - lambda_dssim) * sign / n;
            if (lambda_dssim > 0.0) {
                g -= 0.5 * lambda_dssim * ssim_grad.data[i];
            }
            grad_rendered->data[i] = g;
        }
    }
    return (1.0 - lambda_dssim) * l1 + lambda_dssim * 0.5 * (1.0 - ssim);
}

double eadr_loss(const Image& depth, const Image& image, double beta, Image* grad_depth) {
    if (depth.channels != 1 || depth.width != image.width || depth.height != image.height || depth.empty()) {
        throw Error(ErrorCode::ShapeMismatch, "depth must be H×W×1 and match the image");
    }
    if (beta < 0.0) {
        throw Error(ErrorCode::InvalidArgument, "beta must be non-negative");
    }
    const int w = depth.width;
    const int h = depth.height;
    const double inv_n = 1.0 / static_cast<double>(depth.pixel_count());
    if (grad_depth) {
        *grad_depth = Image(w, h, 1);
    }
    const auto image_step = [&](int x0, int y0, int x1, int y1) {
        double sum = 0.0;
        for (int c = 0; c < image.channels; ++c) {
            sum += std::abs(image.at(x1, y1, c) - image.at(x0, y0, c));
        }
        return sum / image.channels;
    };
    double total = 0.0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int axis = 0; axis < 2; ++axis) {
                const int nx = axis == 0 ? x + 1 : x;
                const int ny = axis == 0 ? y : y + 1;
                if (nx >= w || ny >= h) {
                    continue;
                }
                const double dd = depth.at(nx, ny) - depth.at(x, y);
                const double weight = std::exp(-beta * image_step(x, y, nx, ny));
                total += std::abs(dd) * weight;
                if (grad_depth && dd != 0.0) {
                    const double g = (dd > 0.0 ? 1.0 : -1.0) * weight * inv_n;
                    grad_depth->at(nx, ny) += g;
                    grad_depth->at(x, y) -= g;
                }
            }
        }
    }
    return total * inv_n;
}

double eadr_weight(long iter, int total_prune_steps, int i_step) {
    return iter < static_cast<long>(total_prune_steps - 1) * i_step ? 0.0 : 1.0;
}

} // namespace sparsesplat
