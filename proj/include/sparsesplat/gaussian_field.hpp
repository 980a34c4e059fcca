#pragma once

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace sparsesplat {

inline constexpr double kShC0 = 0.28209479177387814;
inline constexpr int kMaxShDegree = 3;

constexpr int sh_bases(int degree) { return (degree + 1) * (degree + 1); }

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// Rotation matrix of a unit quaternion stored as (w, x, y, z).
Eigen::Matrix3d quaternion_to_rotation(const Eigen::Vector4d& unit_q);

/// Σ = R(q) S Sᵀ R(q)ᵀ with S = diag(s). q is normalized here; throws
/// ZeroQuaternion when ‖q‖ < 1e-12.
Eigen::Matrix3d covariance_from(const Eigen::Vector4d& q, const Eigen::Vector3d& s);

/// Unnormalized Gaussian exp(-½ (x-μ)ᵀ Σ⁻¹ (x-μ)). Throws SingularCovariance
/// when cond(Σ) > 1e12.
double evaluate_gaussian(const Eigen::Vector3d& x, const Eigen::Vector3d& mu, const Eigen::Matrix3d& sigma);

/// Real spherical-harmonic basis up to `degree` (graphics sign convention).
/// Entries past sh_bases(degree) are zero.
std::array<double, 16> sh_basis(const Eigen::Vector3d& dir, int degree);

/// ∂Y_k/∂dir for each basis function, treating the basis as polynomials in
/// (x, y, z).
std::array<Eigen::Vector3d, 16> sh_basis_gradient(const Eigen::Vector3d& dir, int degree);

/// Raw (unclamped) color: Σ_k sh[k]·Y_k(dir) + 0.5. `sh` is B×3 row-major;
/// throws DegreeMismatch when its size is not 3·(degree+1)².
Eigen::Vector3d sh_to_color(std::span<const double> sh, const Eigen::Vector3d& view_dir, int degree);

/// Optimizable Gaussian set. Parameters are stored raw and flat so optimizer
/// moments and compaction can treat every group uniformly.
struct GaussianField {
    int sh_degree = 1;
    std::vector<double> positions;      // M×3
    std::vector<double> rotations;      // M×4, (w,x,y,z), unnormalized
    std::vector<double> log_scales;     // M×3
    std::vector<double> opacity_logits; // M
    std::vector<double> sh;             // M×B×3
    std::vector<double> grad_accum;     // M
    std::vector<int> grad_count;        // M

    GaussianField() = default;
    explicit GaussianField(int degree) : sh_degree(degree) {}

    std::size_t size() const { return opacity_logits.size(); }
    bool empty() const { return opacity_logits.empty(); }
    int bases() const { return sh_bases(sh_degree); }
    std::size_t sh_stride() const { return static_cast<std::size_t>(bases()) * 3; }

    Eigen::Vector3d position(std::size_t i) const {
        return {positions[3 * i], positions[3 * i + 1], positions[3 * i + 2]};
    }
    Eigen::Vector4d rotation(std::size_t i) const {
        return {rotations[4 * i], rotations[4 * i + 1], rotations[4 * i + 2], rotations[4 * i + 3]};
    }
    Eigen::Vector3d scale(std::size_t i) const {
        return {std::exp(log_scales[3 * i]), std::exp(log_scales[3 * i + 1]), std::exp(log_scales[3 * i + 2])};
    }
    double opacity(std::size_t i) const { return sigmoid(opacity_logits[i]); }
    std::span<const double> sh_of(std::size_t i) const { return {sh.data() + i * sh_stride(), sh_stride()}; }
    std::span<double> sh_of(std::size_t i) { return {sh.data() + i * sh_stride(), sh_stride()}; }
    Eigen::Matrix3d covariance(std::size_t i) const { return covariance_from(rotation(i), scale(i)); }

    /// Appends one primitive; `sh_coeffs` may be shorter than the stride, the
    /// remainder is zero-filled.
    void append(const Eigen::Vector3d& position, const Eigen::Vector4d& rotation, const Eigen::Vector3d& log_scale,
                double opacity_logit, std::span<const double> sh_coeffs);

    /// Copies primitive `i` from another field with the same SH degree.
    void append_from(const GaussianField& other, std::size_t i);

    /// Drops rows whose keep flag is 0, preserving survivor order.
    void compact(std::span<const std::uint8_t> keep);

    /// Throws SizeMismatch when per-primitive arrays disagree on M.
    void validate() const;
};

/// Compacts a row-major buffer with `stride` values per row.
template <typename T>
void compact_rows(std::vector<T>& values, std::size_t stride, std::span<const std::uint8_t> keep) {
    std::size_t out = 0;
    for (std::size_t row = 0; row < keep.size(); ++row) {
        if (!keep[row]) {
            continue;
        }
        if (out != row) {
            for (std::size_t k = 0; k < stride; ++k) {
                values[out * stride + k] = values[row * stride + k];
            }
        }
        ++out;
    }
    values.resize(out * stride);
}

} // namespace sparsesplat
