#include "sparsesplat/rasterizer.hpp"

#include "sparsesplat/error.hpp"
#include "sparsesplat/parallel.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace sparsesplat {

namespace {

using Mat23 = Eigen::Matrix<double, 2, 3>;

Mat23 perspective_jacobian(const Eigen::Vector3d& t, const CameraView& view) {
    const double inv_z = 1.0 / t.z();
    Mat23 j;
    j << view.fx * inv_z, 0.0, -view.fx * t.x() * inv_z * inv_z,
        0.0, view.fy * inv_z, -view.fy * t.y() * inv_z * inv_z;
    return j;
}

// Per-primitive projection for one view, plus the intermediates backward needs.
struct Splat {
    std::uint32_t index = 0;
    double u = 0.0, v = 0.0;
    double conic_a = 0.0, conic_b = 0.0, conic_c = 0.0;
    double opacity = 0.0;
    double min_power = 0.0; // below this power, α̂ < 1/255 for sure
    Eigen::Vector3d color;
    std::array<bool, 3> clamped{};
    double dist = 0.0;
    double z = 0.0;
    int x0 = 0, x1 = -1, y0 = 0, y1 = -1;

    Eigen::Vector3d t;
    Eigen::Vector3d dir;
    Eigen::Matrix3d rot;
    Eigen::Vector3d scale;
    Eigen::Matrix3d cov3d;
    Mat23 jw;
};

// Hot subset of Splat read by the per-pixel loops.
struct Prim {
    double u, v;
    double conic_a, conic_b, conic_c;
    double opacity;
    double min_power;
    double dist;
    double color[3];
    int x0, x1, y0, y1;

    bool covers(int px, int py) const { return px >= x0 && px <= x1 && py >= y0 && py <= y1; }
};

Prim make_prim(const Splat& s) {
    return {s.u, s.v, s.conic_a, s.conic_b, s.conic_c, s.opacity, s.min_power, s.dist,
            {s.color[0], s.color[1], s.color[2]}, s.x0, s.x1, s.y0, s.y1};
}

// One blended entry of a pixel: tile-list position and exp(power).
struct Contribution {
    std::uint32_t k;
    double gauss;
};

// Upstream per-splat accumulators: u, v, conic a/b/c, activated opacity,
// color rgb, distance.
constexpr int kSplatGradWidth = 10;
using SplatGrad = std::array<double, kSplatGradWidth>;

} // namespace

struct Rasterizer::State {
    int view_id = 0;
    int width = 0;
    int height = 0;
    int tile_size = 0;
    int tiles_x = 0;
    int tiles_y = 0;
    std::size_t field_size = 0;
    Eigen::Vector3d background;
    std::vector<Splat> splats;                      // depth-sorted
    std::vector<Prim> prims;                        // parallel to splats
    std::vector<std::vector<std::uint32_t>> tiles;  // indices into splats, front to back
    std::vector<double> final_transmittance;        // H×W
    std::vector<std::vector<Contribution>> blended; // per tile, pixel runs in raster order
    std::vector<std::uint32_t> run_start;           // H×W, offset of the pixel's run in its tile
    std::vector<std::uint32_t> run_length;          // H×W
    std::vector<double> raw_depth;                  // H×W
};

Image RenderOutput::color_image() const {
    Image image(width, height, 3);
    image.data = color;
    return image;
}

Image RenderOutput::depth_image(bool normalized) const {
    Image image(width, height, 1);
    image.data = normalized ? depth_normalized : depth;
    return image;
}

void SplatGradients::resize_like(const GaussianField& field) {
    const std::size_t m = field.size();
    d_positions.assign(3 * m, 0.0);
    d_rotations.assign(4 * m, 0.0);
    d_log_scales.assign(3 * m, 0.0);
    d_opacity_logits.assign(m, 0.0);
    d_sh.assign(field.sh_stride() * m, 0.0);
    d_mean2d_norm.assign(m, 0.0);
}

Eigen::Matrix2d project_covariance(const Eigen::Matrix3d& sigma, const Eigen::Vector3d& mu, const CameraView& view) {
    const Eigen::Vector3d t = view.to_camera(mu);
    if (!(t.z() > kNearPlane)) {
        throw Error(ErrorCode::BehindCamera, "Gaussian mean is behind the camera");
    }
    const Mat23 jw = perspective_jacobian(t, view) * view.rotation;
    return jw * sigma * jw.transpose() + kLowPassDilation * Eigen::Matrix2d::Identity();
}

Rasterizer::Rasterizer(RasterSettings settings) : settings_(settings) {}
Rasterizer::~Rasterizer() = default;
Rasterizer::Rasterizer(Rasterizer&&) noexcept = default;
Rasterizer& Rasterizer::operator=(Rasterizer&&) noexcept = default;

RenderOutput Rasterizer::forward(const GaussianField& field, const CameraView& view,
                                 const Eigen::Vector3d& background) {
    field.validate();
    auto state = std::make_unique<State>();
    state->view_id = view.view_id;
    state->width = view.width;
    state->height = view.height;
    state->tile_size = settings_.tile_size > 0 ? settings_.tile_size : std::max(view.width, view.height);
    state->tiles_x = (view.width + state->tile_size - 1) / state->tile_size;
    state->tiles_y = (view.height + state->tile_size - 1) / state->tile_size;
    state->field_size = field.size();
    state->background = background;

    const std::size_t m = field.size();
    const Eigen::Vector3d center = view.center();
    std::vector<Splat> projected(m);
    std::vector<std::uint8_t> keep(m, 0);

    parallel_for(m, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            Splat& s = projected[i];
            s.index = static_cast<std::uint32_t>(i);
            const Eigen::Vector3d mu = field.position(i);
            s.t = view.to_camera(mu);
            if (!(s.t.z() > kRenderNearPlane)) {
                continue;
            }
            s.opacity = field.opacity(i);
            // α̂ ≤ opacity, so a primitive this faint never passes the 1/255 test.
            if (!(s.opacity * 255.0 > 1.0)) {
                continue;
            }
            const Eigen::Vector4d q = field.rotation(i);
            const double qn = q.norm();
            if (qn < 1e-12) {
                continue;
            }
            s.rot = quaternion_to_rotation(q / qn);
            s.scale = field.scale(i);
            const Eigen::Matrix3d m3 = s.rot * s.scale.asDiagonal();
            s.cov3d = m3 * m3.transpose();
            s.jw = perspective_jacobian(s.t, view) * view.rotation;
            const Eigen::Matrix2d cov2d =
                s.jw * s.cov3d * s.jw.transpose() + kLowPassDilation * Eigen::Matrix2d::Identity();
            const double det = cov2d(0, 0) * cov2d(1, 1) - cov2d(0, 1) * cov2d(1, 0);
            if (!(det > 0.0)) {
                continue;
            }
            s.conic_a = cov2d(1, 1) / det;
            s.conic_b = -cov2d(0, 1) / det;
            s.conic_c = cov2d(0, 0) / det;
            s.u = view.fx * s.t.x() / s.t.z() + view.cx;
            s.v = view.fy * s.t.y() / s.t.z() + view.cy;
            s.min_power = -std::log(255.0 * s.opacity);

            // Exact bounding box of the ellipse where opacity·G ≥ 1/255.
            const double q_max = 2.0 * std::log(255.0 * s.opacity);
            const double hx = std::sqrt(q_max * cov2d(0, 0)) + 1e-6;
            const double hy = std::sqrt(q_max * cov2d(1, 1)) + 1e-6;
            s.x0 = std::max(0, static_cast<int>(std::ceil(s.u - hx)));
            s.x1 = std::min(view.width - 1, static_cast<int>(std::floor(s.u + hx)));
            s.y0 = std::max(0, static_cast<int>(std::ceil(s.v - hy)));
            s.y1 = std::min(view.height - 1, static_cast<int>(std::floor(s.v + hy)));
            if (s.x0 > s.x1 || s.y0 > s.y1) {
                continue;
            }

            const Eigen::Vector3d offset = mu - center;
            s.dist = offset.norm();
            s.dir = offset / s.dist;
            s.z = s.t.z();
            const Eigen::Vector3d raw = sh_to_color(field.sh_of(i), s.dir, field.sh_degree);
            for (int c = 0; c < 3; ++c) {
                s.clamped[static_cast<std::size_t>(c)] = raw[c] < 0.0 || raw[c] > 1.0;
                s.color[c] = std::clamp(raw[c], 0.0, 1.0);
            }
            keep[i] = 1;
        }
    });

    RenderOutput out;
    out.width = view.width;
    out.height = view.height;
    out.visible = keep;

    std::vector<std::uint32_t> order;
    order.reserve(m);
    for (std::size_t i = 0; i < m; ++i) {
        if (keep[i]) {
            order.push_back(static_cast<std::uint32_t>(i));
        }
    }
    std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
        if (projected[a].z != projected[b].z) {
            return projected[a].z < projected[b].z;
        }
        return a < b;
    });
    state->splats.reserve(order.size());
    state->prims.reserve(order.size());
    for (std::uint32_t idx : order) {
        state->splats.push_back(projected[idx]);
        state->prims.push_back(make_prim(projected[idx]));
    }

    const int ts = state->tile_size;
    state->tiles.assign(static_cast<std::size_t>(state->tiles_x * state->tiles_y), {});
    for (std::size_t k = 0; k < state->splats.size(); ++k) {
        const Splat& s = state->splats[k];
        for (int ty = s.y0 / ts; ty <= s.y1 / ts; ++ty) {
            for (int tx = s.x0 / ts; tx <= s.x1 / ts; ++tx) {
                state->tiles[static_cast<std::size_t>(ty * state->tiles_x + tx)].push_back(
                    static_cast<std::uint32_t>(k));
            }
        }
    }

    const std::size_t pixels = static_cast<std::size_t>(view.width) * static_cast<std::size_t>(view.height);
    out.color.assign(pixels * 3, 0.0);
    out.depth.assign(pixels, 0.0);
    out.depth_normalized.assign(pixels, 0.0);
    out.alpha.assign(pixels, 0.0);
    out.contrib_count.assign(pixels, 0);
    state->final_transmittance.assign(pixels, 1.0);
    state->run_start.assign(pixels, 0);
    state->run_length.assign(pixels, 0);
    state->blended.assign(state->tiles.size(), {});

    State& st = *state;
    parallel_for(st.tiles.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t tile = begin; tile < end; ++tile) {
            const auto& list = st.tiles[tile];
            auto& blended = st.blended[tile];
            const int tx = static_cast<int>(tile) % st.tiles_x;
            const int ty = static_cast<int>(tile) / st.tiles_x;
            for (int py = ty * ts; py < std::min(view.height, (ty + 1) * ts); ++py) {
                for (int px = tx * ts; px < std::min(view.width, (tx + 1) * ts); ++px) {
                    const std::size_t p = static_cast<std::size_t>(py) * view.width + px;
                    double trans = 1.0;
                    double color[3] = {0.0, 0.0, 0.0};
                    double depth = 0.0;
                    const auto start = static_cast<std::uint32_t>(blended.size());
                    for (std::uint32_t k = 0; k < list.size(); ++k) {
                        const Prim& s = st.prims[list[k]];
                        // Outside the exact box α̂ < 1/255, so this skip is lossless.
                        if (!s.covers(px, py)) {
                            continue;
                        }
                        const double dx = px - s.u;
                        const double dy = py - s.v;
                        const double power =
                            -0.5 * (s.conic_a * dx * dx + s.conic_c * dy * dy) - s.conic_b * dx * dy;
                        if (power < s.min_power - 1e-9) {
                            continue;
                        }
                        const double gauss = std::exp(power);
                        const double a = std::min(kMaxSplatAlpha, s.opacity * gauss);
                        if (a < kMinSplatAlpha) {
                            continue;
                        }
                        blended.push_back({k, gauss});
                        const double w = a * trans;
                        color[0] += w * s.color[0];
                        color[1] += w * s.color[1];
                        color[2] += w * s.color[2];
                        depth += w * s.dist;
                        trans *= 1.0 - a;
                        if (trans < kTransmittanceCutoff) {
                            break;
                        }
                    }
                    for (int c = 0; c < 3; ++c) {
                        out.color[3 * p + static_cast<std::size_t>(c)] = color[c] + trans * background[c];
                    }
                    const double alpha = 1.0 - trans;
                    out.alpha[p] = alpha;
                    out.depth[p] = depth;
                    out.depth_normalized[p] = alpha > kDepthAlphaFloor ? depth / alpha : 0.0;
                    const auto count = static_cast<std::uint32_t>(blended.size()) - start;
                    out.contrib_count[p] = static_cast<int>(count);
                    st.final_transmittance[p] = trans;
                    st.run_start[p] = start;
                    st.run_length[p] = count;
                }
            }
        }
    });
    state->raw_depth = out.depth;
    state_ = std::move(state);
    return out;
}

SplatGradients Rasterizer::backward(const GaussianField& field, const CameraView& view,
                                    const Eigen::Vector3d& background, std::span<const double> d_color,
                                    std::span<const double> d_depth) const {
    if (!state_ || state_->view_id != view.view_id || state_->field_size != field.size() ||
        state_->width != view.width || state_->height != view.height || state_->background != background) {
        throw Error(ErrorCode::ForwardStateMissing, "backward() needs a forward() on the same view and field");
    }
    const State& st = *state_;
    const std::size_t pixels = static_cast<std::size_t>(st.width) * static_cast<std::size_t>(st.height);
    if (d_color.size() != 3 * pixels || d_depth.size() != pixels) {
        throw Error(ErrorCode::ShapeMismatch, "upstream gradient buffers do not match the image size");
    }

    SplatGradients grads;
    grads.resize_like(field);

    // Per-tile, per-entry partial gradients; reduced below in tile order so the
    // sum is independent of the worker count.
    std::vector<std::vector<SplatGrad>> partial(st.tiles.size());
    const int ts = st.tile_size;
    parallel_for(st.tiles.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t tile = begin; tile < end; ++tile) {
            const auto& list = st.tiles[tile];
            const auto& blended = st.blended[tile];
            auto& acc = partial[tile];
            acc.assign(list.size(), SplatGrad{});
            const int tx = static_cast<int>(tile) % st.tiles_x;
            const int ty = static_cast<int>(tile) / st.tiles_x;
            for (int py = ty * ts; py < std::min(st.height, (ty + 1) * ts); ++py) {
                for (int px = tx * ts; px < std::min(st.width, (tx + 1) * ts); ++px) {
                    const std::size_t p = static_cast<std::size_t>(py) * st.width + px;
                    const double g_color[3] = {d_color[3 * p], d_color[3 * p + 1], d_color[3 * p + 2]};
                    const double t_final = st.final_transmittance[p];
                    const double alpha = 1.0 - t_final;
                    double g_depth = 0.0;
                    double g_alpha = 0.0;
                    if (alpha > kDepthAlphaFloor) {
                        g_depth = d_depth[p] / alpha;
                        g_alpha = -d_depth[p] * st.raw_depth[p] / (alpha * alpha);
                    }
                    if (g_color[0] == 0.0 && g_color[1] == 0.0 && g_color[2] == 0.0 && g_depth == 0.0 &&
                        g_alpha == 0.0) {
                        continue;
                    }
                    // Composited value of everything behind the current entry.
                    double behind_color[3] = {background[0], background[1], background[2]};
                    double behind_depth = 0.0;
                    double behind_alpha = 0.0;
                    double trans = t_final;
                    const std::uint32_t run = st.run_start[p];
                    for (std::uint32_t j = st.run_length[p]; j-- > 0;) {
                        const std::uint32_t k = blended[run + j].k;
                        const double gauss = blended[run + j].gauss;
                        const Prim& s = st.prims[list[k]];
                        const double dx = px - s.u;
                        const double dy = py - s.v;
                        const double raw_alpha = s.opacity * gauss;
                        const double a = std::min(kMaxSplatAlpha, raw_alpha);
                        trans /= 1.0 - a;
                        const double w = a * trans;
                        SplatGrad& g = acc[k];
                        g[6] += w * g_color[0];
                        g[7] += w * g_color[1];
                        g[8] += w * g_color[2];
                        g[9] += w * g_depth;

                        const double g_a =
                            trans * (g_color[0] * (s.color[0] - behind_color[0]) +
                                     g_color[1] * (s.color[1] - behind_color[1]) +
                                     g_color[2] * (s.color[2] - behind_color[2]) + g_depth * (s.dist - behind_depth) +
                                     g_alpha * (1.0 - behind_alpha));
                        for (int c = 0; c < 3; ++c) {
                            behind_color[c] = a * s.color[c] + (1.0 - a) * behind_color[c];
                        }
                        behind_depth = a * s.dist + (1.0 - a) * behind_depth;
                        behind_alpha = a + (1.0 - a) * behind_alpha;

                        if (raw_alpha >= kMaxSplatAlpha) {
                            continue;
                        }
                        g[5] += g_a * gauss;
                        const double g_power = g_a * a;
                        g[0] += g_power * (s.conic_a * dx + s.conic_b * dy);
                        g[1] += g_power * (s.conic_b * dx + s.conic_c * dy);
                        g[2] += g_power * (-0.5 * dx * dx);
                        g[3] += g_power * (-dx * dy);
                        g[4] += g_power * (-0.5 * dy * dy);
                    }
                }
            }
        }
    });

    std::vector<SplatGrad> per_splat(st.splats.size(), SplatGrad{});
    for (std::size_t tile = 0; tile < st.tiles.size(); ++tile) {
        const auto& list = st.tiles[tile];
        for (std::size_t k = 0; k < list.size(); ++k) {
            for (int c = 0; c < kSplatGradWidth; ++c) {
                per_splat[list[k]][static_cast<std::size_t>(c)] += partial[tile][k][static_cast<std::size_t>(c)];
            }
        }
    }

    const int degree = field.sh_degree;
    const int bases = field.bases();
    const std::size_t sh_stride = field.sh_stride();
    parallel_for(st.splats.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t k = begin; k < end; ++k) {
            const Splat& s = st.splats[k];
            const SplatGrad& g = per_splat[k];
            const std::size_t i = s.index;

            grads.d_mean2d_norm[i] = std::hypot(g[0] * 0.5 * st.width, g[1] * 0.5 * st.height);

            // Conic → 2D covariance. b appears twice in the symmetric conic.
            Eigen::Matrix2d g_conic;
            g_conic << g[2], 0.5 * g[3], 0.5 * g[3], g[4];
            Eigen::Matrix2d conic;
            conic << s.conic_a, s.conic_b, s.conic_b, s.conic_c;
            const Eigen::Matrix2d g_cov2d = -conic * g_conic * conic;

            // Σ′ = (JW) Σ (JW)ᵀ + 0.3 I.
            const Eigen::Matrix3d g_cov3d = s.jw.transpose() * g_cov2d * s.jw;
            const Mat23 g_jw = 2.0 * g_cov2d * s.jw * s.cov3d;
            const Mat23 g_j = g_jw * view.rotation.transpose();

            const double tx = s.t.x(), ty = s.t.y(), tz = s.t.z();
            const double iz = 1.0 / tz, iz2 = iz * iz, iz3 = iz2 * iz;
            Eigen::Vector3d g_t;
            g_t.x() = g_j(0, 2) * (-view.fx * iz2) + g[0] * view.fx * iz;
            g_t.y() = g_j(1, 2) * (-view.fy * iz2) + g[1] * view.fy * iz;
            g_t.z() = g_j(0, 0) * (-view.fx * iz2) + g_j(0, 2) * (2.0 * view.fx * tx * iz3) +
                      g_j(1, 1) * (-view.fy * iz2) + g_j(1, 2) * (2.0 * view.fy * ty * iz3) -
                      g[0] * view.fx * tx * iz2 - g[1] * view.fy * ty * iz2;
            Eigen::Vector3d g_mu = view.rotation.transpose() * g_t;

            // Color through SH; clamped channels pass no gradient.
            Eigen::Vector3d g_rgb(g[6], g[7], g[8]);
            for (int c = 0; c < 3; ++c) {
                if (s.clamped[static_cast<std::size_t>(c)]) {
                    g_rgb[c] = 0.0;
                }
            }
            const auto basis = sh_basis(s.dir, degree);
            const auto basis_grad = sh_basis_gradient(s.dir, degree);
            const auto coeffs = field.sh_of(i);
            Eigen::Vector3d g_dir = Eigen::Vector3d::Zero();
            for (int b = 0; b < bases; ++b) {
                double weighted = 0.0;
                for (int c = 0; c < 3; ++c) {
                    const std::size_t idx = static_cast<std::size_t>(b * 3 + c);
                    grads.d_sh[i * sh_stride + idx] = basis[static_cast<std::size_t>(b)] * g_rgb[c];
                    weighted += coeffs[idx] * g_rgb[c];
                }
                g_dir += weighted * basis_grad[static_cast<std::size_t>(b)];
            }
            g_mu += (g_dir - s.dir * s.dir.dot(g_dir)) / s.dist;
            g_mu += g[9] * s.dir;

            for (int a = 0; a < 3; ++a) {
                grads.d_positions[3 * i + static_cast<std::size_t>(a)] = g_mu[a];
            }

            // Σ = M Mᵀ, M = R diag(s).
            const Eigen::Matrix3d g_cov_sym = 0.5 * (g_cov3d + g_cov3d.transpose());
            const Eigen::Matrix3d m3 = s.rot * s.scale.asDiagonal();
            const Eigen::Matrix3d g_m = 2.0 * g_cov_sym * m3;
            Eigen::Matrix3d g_r;
            for (int col = 0; col < 3; ++col) {
                const double g_scale = g_m.col(col).dot(s.rot.col(col));
                grads.d_log_scales[3 * i + static_cast<std::size_t>(col)] = g_scale * s.scale[col];
                g_r.col(col) = g_m.col(col) * s.scale[col];
            }

            const Eigen::Vector4d q_raw = field.rotation(i);
            const double q_norm = q_raw.norm();
            const Eigen::Vector4d q = q_raw / q_norm;
            const double w = q[0], x = q[1], y = q[2], z = q[3];
            Eigen::Vector4d g_q;
            g_q[0] = 2.0 * (-z * g_r(0, 1) + y * g_r(0, 2) + z * g_r(1, 0) - x * g_r(1, 2) - y * g_r(2, 0) +
                            x * g_r(2, 1));
            g_q[1] = 2.0 * (y * g_r(0, 1) + z * g_r(0, 2) + y * g_r(1, 0) - 2.0 * x * g_r(1, 1) - w * g_r(1, 2) +
                            z * g_r(2, 0) + w * g_r(2, 1) - 2.0 * x * g_r(2, 2));
            g_q[2] = 2.0 * (-2.0 * y * g_r(0, 0) + x * g_r(0, 1) + w * g_r(0, 2) + x * g_r(1, 0) + z * g_r(1, 2) -
                            w * g_r(2, 0) + z * g_r(2, 1) - 2.0 * y * g_r(2, 2));
            g_q[3] = 2.0 * (-2.0 * z * g_r(0, 0) - w * g_r(0, 1) + x * g_r(0, 2) + w * g_r(1, 0) -
                            2.0 * z * g_r(1, 1) + y * g_r(1, 2) + x * g_r(2, 0) + y * g_r(2, 1));
            const Eigen::Vector4d g_q_raw = (g_q - q * q.dot(g_q)) / q_norm;
            for (int a = 0; a < 4; ++a) {
                grads.d_rotations[4 * i + static_cast<std::size_t>(a)] = g_q_raw[a];
            }

            grads.d_opacity_logits[i] = g[5] * s.opacity * (1.0 - s.opacity);
        }
    });
    return grads;
}

RenderOutput render(const GaussianField& field, const CameraView& view, const Eigen::Vector3d& background,
                    RasterSettings settings) {
    Rasterizer rasterizer(settings);
    return rasterizer.forward(field, view, background);
}

} // namespace sparsesplat
