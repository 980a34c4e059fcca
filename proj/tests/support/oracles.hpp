// Independent oracles shared by the unit tests and the acceptance binary.
#pragma once

#include "sparsesplat/camera.hpp"
#include "sparsesplat/features.hpp"
#include "sparsesplat/gaussian_field.hpp"
#include "sparsesplat/image.hpp"
#include "sparsesplat/losses.hpp"
#include "sparsesplat/rasterizer.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

namespace oracle {

using namespace sparsesplat;

struct ReferenceImage {
    int width = 0;
    int height = 0;
    std::vector<double> color;      // H×W×3
    std::vector<double> weight_sum; // Σ wᵢ
    std::vector<double> alpha;      // 1 − Π(1 − αᵢ)
    std::vector<double> depth;      // Σ wᵢ dᵢ
};

// Brute force: every Gaussian against every pixel, no tiles, no bounding boxes,
// no early termination. Shares only the SH and covariance definitions with the
// library.
inline ReferenceImage reference_render(const GaussianField& field, const CameraView& view,
                                       const Eigen::Vector3d& bg) {
    struct P {
        double z;
        std::size_t i;
        Eigen::Vector2d mean;
        Eigen::Matrix2d inv;
        double opacity;
        Eigen::Vector3d color;
        double dist;
    };
    std::vector<P> ps;
    const Eigen::Vector3d center = -view.rotation.transpose() * view.translation;
    for (std::size_t i = 0; i < field.size(); ++i) {
        const Eigen::Vector3d mu = field.position(i);
        const Eigen::Vector3d t = view.rotation * mu + view.translation;
        if (t.z() <= 0.01) {
            continue;
        }
        Eigen::Matrix<double, 2, 3> j;
        j << view.fx / t.z(), 0, -view.fx * t.x() / (t.z() * t.z()), 0, view.fy / t.z(),
            -view.fy * t.y() / (t.z() * t.z());
        const Eigen::Matrix<double, 2, 3> jw = j * view.rotation;
        const Eigen::Matrix2d cov = jw * field.covariance(i) * jw.transpose() + 0.3 * Eigen::Matrix2d::Identity();
        const Eigen::Vector3d dir = (mu - center).normalized();
        Eigen::Vector3d c = sh_to_color(field.sh_of(i), dir, field.sh_degree);
        c = c.cwiseMax(0.0).cwiseMin(1.0);
        ps.push_back({t.z(), i, {view.fx * t.x() / t.z() + view.cx, view.fy * t.y() / t.z() + view.cy}, cov.inverse(),
                      field.opacity(i), c, (mu - center).norm()});
    }
    std::stable_sort(ps.begin(), ps.end(), [](const P& a, const P& b) { return a.z < b.z; });
    ReferenceImage out;
    out.width = view.width;
    out.height = view.height;
    const std::size_t n = static_cast<std::size_t>(view.width * view.height);
    out.color.assign(3 * n, 0.0);
    out.weight_sum.assign(n, 0.0);
    out.alpha.assign(n, 0.0);
    out.depth.assign(n, 0.0);
    for (int y = 0; y < view.height; ++y) {
        for (int x = 0; x < view.width; ++x) {
            const std::size_t p = static_cast<std::size_t>(y * view.width + x);
            double trans = 1.0;
            Eigen::Vector3d c = Eigen::Vector3d::Zero();
            for (const P& g : ps) {
                const Eigen::Vector2d d = Eigen::Vector2d(x, y) - g.mean;
                const double a = std::min(0.99, g.opacity * std::exp(-0.5 * d.dot(g.inv * d)));
                if (a < 1.0 / 255.0) {
                    continue;
                }
                const double w = a * trans;
                c += w * g.color;
                out.weight_sum[p] += w;
                out.depth[p] += w * g.dist;
                trans *= 1.0 - a;
            }
            c += trans * bg;
            for (int k = 0; k < 3; ++k) {
                out.color[3 * p + static_cast<std::size_t>(k)] = c[k];
            }
            out.alpha[p] = 1.0 - trans;
        }
    }
    return out;
}

inline CameraView make_camera(int id, const Eigen::Vector3d& eye, int width, int height, double focal) {
    CameraView v;
    v.view_id = id;
    v.width = width;
    v.height = height;
    v.fx = focal;
    v.fy = focal;
    v.cx = 0.5 * (width - 1);
    v.cy = 0.5 * (height - 1);
    look_at(v, eye, Eigen::Vector3d::Zero(), Eigen::Vector3d(0, -1, 0));
    return v;
}

inline Eigen::Vector4d random_unit_quaternion(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    return Eigen::Vector4d(n(rng), n(rng), n(rng), n(rng)).normalized();
}

// Random field around the origin: n Gaussians, positions in a ball of `radius`.
inline GaussianField random_field(std::mt19937_64& rng, std::size_t n, int sh_degree, double radius,
                                  double min_scale, double max_scale, double min_opacity, double max_opacity) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> nd(0.0, 1.0);
    GaussianField f(sh_degree);
    for (std::size_t i = 0; i < n; ++i) {
        const Eigen::Vector3d p(radius * (2 * u(rng) - 1), radius * (2 * u(rng) - 1), radius * (2 * u(rng) - 1));
        Eigen::Vector3d ls;
        for (int a = 0; a < 3; ++a) ls[a] = std::log(min_scale + (max_scale - min_scale) * u(rng));
        const double o = min_opacity + (max_opacity - min_opacity) * u(rng);
        std::vector<double> sh(f.sh_stride());
        for (std::size_t k = 0; k < sh.size(); ++k) sh[k] = (k < 3 ? 0.8 : 0.2) * nd(rng);
        // Keep rotations unnormalized to exercise the normalization path.
        f.append(p, random_unit_quaternion(rng) * (0.5 + u(rng)), ls, std::log(o / (1 - o)), sh);
    }
    return f;
}

// Direct evaluation of the level-mask rule with 1-indexed feature position k.
inline std::vector<std::uint8_t> level_mask_direct(int t, const std::vector<int>& dims) {
    const int levels = static_cast<int>(dims.size());
    const int total = std::accumulate(dims.begin(), dims.end(), 0);
    std::vector<std::uint8_t> m(static_cast<std::size_t>(total), 0);
    for (int k = 1; k <= total; ++k) {
        int cut = 0;
        for (int l = 1; l <= levels - t; ++l) cut += dims[static_cast<std::size_t>(l - 1)];
        const bool on = (t < levels && k > cut) || t >= levels;
        m[static_cast<std::size_t>(k - 1)] = on ? 1 : 0;
    }
    return m;
}

// Direct summation of the edge-aware depth term, forward differences.
inline double eadr_direct(const Image& depth, const Image& image, double beta) {
    const int h = depth.height, w = depth.width;
    double sum = 0.0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (x + 1 < w) {
                double di = 0.0;
                for (int c = 0; c < image.channels; ++c) di += std::abs(image.at(x + 1, y, c) - image.at(x, y, c));
                di /= image.channels;
                sum += std::abs(depth.at(x + 1, y, 0) - depth.at(x, y, 0)) * std::exp(-beta * di);
            }
            if (y + 1 < h) {
                double di = 0.0;
                for (int c = 0; c < image.channels; ++c) di += std::abs(image.at(x, y + 1, c) - image.at(x, y, c));
                di /= image.channels;
                sum += std::abs(depth.at(x, y + 1, 0) - depth.at(x, y, 0)) * std::exp(-beta * di);
            }
        }
    }
    return sum / (h * w);
}

// Bilinear feature query and masked cosine, written independently.
inline bool feature_at(const FeatureMap& f, double u, double v, std::vector<double>& out) {
    if (u < 0 || v < 0 || u > f.width - 1 || v > f.height - 1) return false;
    const int x0 = static_cast<int>(std::floor(u)), y0 = static_cast<int>(std::floor(v));
    const int x1 = std::min(x0 + 1, f.width - 1), y1 = std::min(y0 + 1, f.height - 1);
    const double a = u - x0, b = v - y0;
    out.assign(static_cast<std::size_t>(f.dims), 0.0);
    for (int k = 0; k < f.dims; ++k) {
        out[static_cast<std::size_t>(k)] = static_cast<float>((1 - a) * (1 - b) * f.at(k, x0, y0) +
                                                              a * (1 - b) * f.at(k, x1, y0) +
                                                              (1 - a) * b * f.at(k, x0, y1) + a * b * f.at(k, x1, y1));
    }
    return true;
}

inline double masked_cosine(const std::vector<double>& a, const std::vector<double>& b,
                            const std::vector<std::uint8_t>& mask) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        if (!mask[k]) continue;
        dot += a[k] * b[k];
        na += a[k] * a[k];
        nb += b[k] * b[k];
    }
    if (std::sqrt(na) < 1e-12 || std::sqrt(nb) < 1e-12) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

struct PruneOracle {
    bool prune = false;
    int valid_views = 0;
    double closest_margin = 1e9; // min |s − τ| over valid pairs
};

inline PruneOracle prune_direct(const Eigen::Vector3d& mu, const std::vector<CameraView>& views,
                                const FeatureStack& stack, int t, double tau) {
    const auto mask = level_mask_direct(t, stack.level_dims);
    std::vector<std::vector<double>> feats(views.size());
    std::vector<bool> ok(views.size(), false);
    PruneOracle r;
    for (std::size_t v = 0; v < views.size(); ++v) {
        const Eigen::Vector3d c = views[v].rotation * mu + views[v].translation;
        if (!(c.z() > 1e-6)) continue;
        const double u = views[v].fx * c.x() / c.z() + views[v].cx;
        const double w = views[v].fy * c.y() / c.z() + views[v].cy;
        ok[v] = feature_at(stack.for_view(views[v].view_id), u, w, feats[v]);
        r.valid_views += ok[v] ? 1 : 0;
    }
    if (r.valid_views < 2) return r;
    bool all_below = true;
    for (std::size_t m = 0; m < views.size(); ++m) {
        for (std::size_t n = 0; n < views.size(); ++n) {
            if (m == n || !ok[m] || !ok[n]) continue;
            const double s = masked_cosine(feats[m], feats[n], mask);
            r.closest_margin = std::min(r.closest_margin, std::abs(s - tau));
            if (!(s < tau)) all_below = false;
        }
    }
    r.prune = all_below;
    return r;
}

// Training-style objective summed over views: photometric + EADR on the
// normalized depth of the production renderer.
inline double objective(const GaussianField& field, const std::vector<CameraView>& views,
                        const std::vector<Image>& targets, const Eigen::Vector3d& bg, double eadr_scale) {
    double total = 0.0;
    for (std::size_t v = 0; v < views.size(); ++v) {
        const RenderOutput out = render(field, views[v], bg);
        total += photometric_loss(out.color_image(), targets[v], 0.2);
        total += eadr_scale * eadr_loss(out.depth_image(true), targets[v], 2.0);
    }
    return total;
}

inline SplatGradients objective_gradient(const GaussianField& field, const std::vector<CameraView>& views,
                                         const std::vector<Image>& targets, const Eigen::Vector3d& bg,
                                         double eadr_scale) {
    SplatGradients sum;
    sum.resize_like(field);
    for (std::size_t v = 0; v < views.size(); ++v) {
        Rasterizer r;
        const RenderOutput out = r.forward(field, views[v], bg);
        Image gc, gd;
        photometric_loss(out.color_image(), targets[v], 0.2, &gc);
        eadr_loss(out.depth_image(true), targets[v], 2.0, &gd);
        for (double& g : gd.data) g *= eadr_scale;
        const SplatGradients g = r.backward(field, views[v], bg, gc.data, gd.data);
        const auto add = [](std::vector<double>& a, const std::vector<double>& b) {
            for (std::size_t k = 0; k < a.size(); ++k) a[k] += b[k];
        };
        add(sum.d_positions, g.d_positions);
        add(sum.d_rotations, g.d_rotations);
        add(sum.d_log_scales, g.d_log_scales);
        add(sum.d_opacity_logits, g.d_opacity_logits);
        add(sum.d_sh, g.d_sh);
    }
    return sum;
}

struct GradCheck {
    std::size_t checked = 0;
    std::size_t failures = 0;
    double worst_rel = 0.0;
    std::string worst_param;
};

// Central differences over every raw parameter; an entry passes when
// |analytic − numeric| ≤ max(abs_floor, rel · max(|analytic|, |numeric|)).
inline GradCheck finite_difference_check(const GaussianField& field, const std::vector<CameraView>& views,
                                         const std::vector<Image>& targets, const Eigen::Vector3d& bg,
                                         double eadr_scale, double h, double rel, double abs_floor) {
    const SplatGradients g = objective_gradient(field, views, targets, bg, eadr_scale);
    GradCheck r;
    const auto check = [&](std::vector<double> GaussianField::*member, const std::vector<double>& analytic,
                           const char* name) {
        for (std::size_t k = 0; k < analytic.size(); ++k) {
            GaussianField plus = field, minus = field;
            (plus.*member)[k] += h;
            (minus.*member)[k] -= h;
            const double numeric = (objective(plus, views, targets, bg, eadr_scale) -
                                    objective(minus, views, targets, bg, eadr_scale)) /
                                   (2 * h);
            const double err = std::abs(numeric - analytic[k]);
            const double scale = std::max(std::abs(numeric), std::abs(analytic[k]));
            ++r.checked;
            if (err > std::max(abs_floor, rel * scale)) {
                ++r.failures;
            }
            const double rel_err = err / std::max(scale, abs_floor / rel);
            if (rel_err > r.worst_rel) {
                r.worst_rel = rel_err;
                r.worst_param = std::string(name) + "[" + std::to_string(k) + "]";
            }
        }
    };
    check(&GaussianField::positions, g.d_positions, "position");
    check(&GaussianField::rotations, g.d_rotations, "rotation");
    check(&GaussianField::log_scales, g.d_log_scales, "log_scale");
    check(&GaussianField::opacity_logits, g.d_opacity_logits, "opacity_logit");
    check(&GaussianField::sh, g.d_sh, "sh");
    return r;
}

// Five broad, semi-transparent Gaussians covering every pixel of two 8×8 views,
// plus random targets; keeps every pixel away from the α clamps.
struct GradScene {
    GaussianField field;
    std::vector<CameraView> views;
    std::vector<Image> targets;
};

inline GradScene gradient_scene(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    GradScene s;
    s.field = GaussianField(1);
    for (int i = 0; i < 5; ++i) {
        const Eigen::Vector3d p(0.4 * (2 * u(rng) - 1), 0.4 * (2 * u(rng) - 1), 0.4 * (2 * u(rng) - 1));
        const Eigen::Vector3d ls(std::log(1.5 + 0.5 * u(rng)), std::log(1.5 + 0.5 * u(rng)),
                                 std::log(1.5 + 0.5 * u(rng)));
        const double o = 0.3 + 0.4 * u(rng);
        std::vector<double> sh(12);
        for (int c = 0; c < 3; ++c) sh[static_cast<std::size_t>(c)] = (0.2 + 0.6 * u(rng) - 0.5) / kShC0;
        for (std::size_t k = 3; k < 12; ++k) sh[k] = 0.1 * (2 * u(rng) - 1);
        s.field.append(p, random_unit_quaternion(rng), ls, std::log(o / (1 - o)), sh);
    }
    s.views.push_back(make_camera(0, {0.3, -0.2, -4.0}, 8, 8, 10.0));
    s.views.push_back(make_camera(1, {-1.2, 0.4, -3.8}, 8, 8, 10.0));
    for (int v = 0; v < 2; ++v) {
        Image t(8, 8, 3);
        for (double& x : t.data) x = u(rng);
        s.targets.push_back(t);
    }
    return s;
}

} // namespace oracle
