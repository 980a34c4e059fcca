#pragma once

#include "sparsesplat/camera.hpp"
#include "sparsesplat/gaussian_field.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

namespace sparsesplat {

inline constexpr double kLowPassDilation = 0.3;
inline constexpr double kMaxSplatAlpha = 0.99;
inline constexpr double kMinSplatAlpha = 1.0 / 255.0;
inline constexpr double kTransmittanceCutoff = 1e-4;
inline constexpr double kDepthAlphaFloor = 1e-4;
/// Primitives closer than this (camera-frame z) are culled before projection.
inline constexpr double kRenderNearPlane = 0.01;

struct RenderOutput {
    int width = 0;
    int height = 0;
    std::vector<double> color;            // H×W×3, background composited
    std::vector<double> depth;            // H×W, Σ wᵢ dᵢ
    std::vector<double> depth_normalized; // depth / alpha where alpha > 1e-4, else 0
    std::vector<double> alpha;            // H×W, Σ wᵢ
    std::vector<int> contrib_count;       // primitives blended per pixel
    std::vector<std::uint8_t> visible;    // M, primitive survived culling in this view

    Image color_image() const;
    /// Single-channel image of depth_normalized (or raw depth).
    Image depth_image(bool normalized = true) const;
};

/// Gradients w.r.t. the raw parameters, laid out like GaussianField.
struct SplatGradients {
    std::vector<double> d_positions;
    std::vector<double> d_rotations;
    std::vector<double> d_log_scales;
    std::vector<double> d_opacity_logits;
    std::vector<double> d_sh;
    /// ‖∂L/∂mean2d‖ with the 2D mean expressed in normalized device units
    /// (pixels scaled by 2/W, 2/H); the densification statistic.
    std::vector<double> d_mean2d_norm;

    void resize_like(const GaussianField& field);
};

/// EWA projection of a 3D covariance: J W Σ Wᵀ Jᵀ + 0.3·I. Throws BehindCamera
/// when mu is not in front of the camera.
Eigen::Matrix2d project_covariance(const Eigen::Matrix3d& sigma, const Eigen::Vector3d& mu, const CameraView& view);

struct RasterSettings {
    /// Side of the square tiles used for binning; 0 renders the whole image as
    /// one bin.
    int tile_size = 16;
};

/// Forward/backward rasterizer. forward() keeps the traversal state that the
/// paired backward() call replays.
class Rasterizer {
public:
    explicit Rasterizer(RasterSettings settings = {});
    ~Rasterizer();
    Rasterizer(Rasterizer&&) noexcept;
    Rasterizer& operator=(Rasterizer&&) noexcept;

    RenderOutput forward(const GaussianField& field, const CameraView& view, const Eigen::Vector3d& background);

    /// Gradients of Σ_pixels (d_color·color + d_depth·depth_normalized). Throws
    /// ForwardStateMissing unless forward() last ran on the same view, field
    /// size and background.
    SplatGradients backward(const GaussianField& field, const CameraView& view, const Eigen::Vector3d& background,
                            std::span<const double> d_color, std::span<const double> d_depth) const;

private:
    struct State;
    RasterSettings settings_;
    std::unique_ptr<State> state_;
};

RenderOutput render(const GaussianField& field, const CameraView& view, const Eigen::Vector3d& background,
                    RasterSettings settings = {});

} // namespace sparsesplat
