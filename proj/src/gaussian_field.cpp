#include "sparsesplat/gaussian_field.hpp"

#include "sparsesplat/error.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <string>

namespace sparsesplat {

namespace {

constexpr double kShC1 = 0.4886025119029199;
constexpr double kShC2[] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005, -1.0925484305920792,
                            0.5462742152960396};
constexpr double kShC3[] = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658, 0.3731763325901154,
                            -0.4570457994644658, 1.445305721320277, -0.5900435899266435};

} // namespace

Eigen::Matrix3d quaternion_to_rotation(const Eigen::Vector4d& q) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Eigen::Matrix3d r;
    r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
        2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
        2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
    return r;
}

Eigen::Matrix3d covariance_from(const Eigen::Vector4d& q, const Eigen::Vector3d& s) {
    const double norm = q.norm();
    if (norm < 1e-12) {
        throw Error(ErrorCode::ZeroQuaternion, "quaternion norm below 1e-12");
    }
    const Eigen::Matrix3d m = quaternion_to_rotation(q / norm) * s.asDiagonal();
    return m * m.transpose();
}

double evaluate_gaussian(const Eigen::Vector3d& x, const Eigen::Vector3d& mu, const Eigen::Matrix3d& sigma) {
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(sigma);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    if (!(lo > 0.0) || hi / lo > 1e12) {
        throw Error(ErrorCode::SingularCovariance, "covariance condition number exceeds 1e12");
    }
    const Eigen::Vector3d d = x - mu;
    return std::exp(-0.5 * d.dot(sigma.ldlt().solve(d)));
}

std::array<double, 16> sh_basis(const Eigen::Vector3d& dir, int degree) {
    std::array<double, 16> y{};
    const double x = dir.x(), yy_ = dir.y(), z = dir.z();
    y[0] = kShC0;
    if (degree < 1) {
        return y;
    }
    y[1] = -kShC1 * yy_;
    y[2] = kShC1 * z;
    y[3] = -kShC1 * x;
    if (degree < 2) {
        return y;
    }
    const double xx = x * x, yy = yy_ * yy_, zz = z * z;
    y[4] = kShC2[0] * x * yy_;
    y[5] = kShC2[1] * yy_ * z;
    y[6] = kShC2[2] * (2.0 * zz - xx - yy);
    y[7] = kShC2[3] * x * z;
    y[8] = kShC2[4] * (xx - yy);
    if (degree < 3) {
        return y;
    }
    y[9] = kShC3[0] * yy_ * (3.0 * xx - yy);
    y[10] = kShC3[1] * x * yy_ * z;
    y[11] = kShC3[2] * yy_ * (4.0 * zz - xx - yy);
    y[12] = kShC3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
    y[13] = kShC3[4] * x * (4.0 * zz - xx - yy);
    y[14] = kShC3[5] * z * (xx - yy);
    y[15] = kShC3[6] * x * (xx - 3.0 * yy);
    return y;
}

std::array<Eigen::Vector3d, 16> sh_basis_gradient(const Eigen::Vector3d& dir, int degree) {
    std::array<Eigen::Vector3d, 16> g;
    for (auto& v : g) {
        v.setZero();
    }
    if (degree < 1) {
        return g;
    }
    const double x = dir.x(), y = dir.y(), z = dir.z();
    g[1] = {0.0, -kShC1, 0.0};
    g[2] = {0.0, 0.0, kShC1};
    g[3] = {-kShC1, 0.0, 0.0};
    if (degree < 2) {
        return g;
    }
    const double xx = x * x, yy = y * y, zz = z * z;
    g[4] = kShC2[0] * Eigen::Vector3d(y, x, 0.0);
    g[5] = kShC2[1] * Eigen::Vector3d(0.0, z, y);
    g[6] = kShC2[2] * Eigen::Vector3d(-2.0 * x, -2.0 * y, 4.0 * z);
    g[7] = kShC2[3] * Eigen::Vector3d(z, 0.0, x);
    g[8] = kShC2[4] * Eigen::Vector3d(2.0 * x, -2.0 * y, 0.0);
    if (degree < 3) {
        return g;
    }
    g[9] = kShC3[0] * Eigen::Vector3d(6.0 * x * y, 3.0 * xx - 3.0 * yy, 0.0);
    g[10] = kShC3[1] * Eigen::Vector3d(y * z, x * z, x * y);
    g[11] = kShC3[2] * Eigen::Vector3d(-2.0 * x * y, 4.0 * zz - xx - 3.0 * yy, 8.0 * y * z);
    g[12] = kShC3[3] * Eigen::Vector3d(-6.0 * x * z, -6.0 * y * z, 6.0 * zz - 3.0 * xx - 3.0 * yy);
    g[13] = kShC3[4] * Eigen::Vector3d(4.0 * zz - 3.0 * xx - yy, -2.0 * x * y, 8.0 * x * z);
    g[14] = kShC3[5] * Eigen::Vector3d(2.0 * x * z, -2.0 * y * z, xx - yy);
    g[15] = kShC3[6] * Eigen::Vector3d(3.0 * xx - 3.0 * yy, -6.0 * x * y, 0.0);
    return g;
}

Eigen::Vector3d sh_to_color(std::span<const double> sh, const Eigen::Vector3d& view_dir, int degree) {
    if (degree < 0 || degree > kMaxShDegree || sh.size() != static_cast<std::size_t>(sh_bases(degree)) * 3) {
        throw Error(ErrorCode::DegreeMismatch, "SH coefficient count does not match degree " + std::to_string(degree));
    }
    const auto basis = sh_basis(view_dir, degree);
    Eigen::Vector3d color = Eigen::Vector3d::Constant(0.5);
    for (int k = 0; k < sh_bases(degree); ++k) {
        for (int c = 0; c < 3; ++c) {
            color[c] += basis[static_cast<std::size_t>(k)] * sh[static_cast<std::size_t>(k * 3 + c)];
        }
    }
    return color;
}

void GaussianField::append(const Eigen::Vector3d& position, const Eigen::Vector4d& rotation,
                           const Eigen::Vector3d& log_scale, double opacity_logit, std::span<const double> sh_coeffs) {
    positions.insert(positions.end(), {position.x(), position.y(), position.z()});
    rotations.insert(rotations.end(), {rotation[0], rotation[1], rotation[2], rotation[3]});
    log_scales.insert(log_scales.end(), {log_scale.x(), log_scale.y(), log_scale.z()});
    opacity_logits.push_back(opacity_logit);
    const std::size_t stride = sh_stride();
    for (std::size_t k = 0; k < stride; ++k) {
        sh.push_back(k < sh_coeffs.size() ? sh_coeffs[k] : 0.0);
    }
    grad_accum.push_back(0.0);
    grad_count.push_back(0);
}

void GaussianField::append_from(const GaussianField& other, std::size_t i) {
    append(other.position(i), other.rotation(i),
           {other.log_scales[3 * i], other.log_scales[3 * i + 1], other.log_scales[3 * i + 2]},
           other.opacity_logits[i], other.sh_of(i));
}

void GaussianField::compact(std::span<const std::uint8_t> keep) {
    if (keep.size() != size()) {
        throw Error(ErrorCode::SizeMismatch, "keep mask length differs from field size");
    }
    compact_rows(positions, 3, keep);
    compact_rows(rotations, 4, keep);
    compact_rows(log_scales, 3, keep);
    compact_rows(opacity_logits, 1, keep);
    compact_rows(sh, sh_stride(), keep);
    compact_rows(grad_accum, 1, keep);
    compact_rows(grad_count, 1, keep);
}

void GaussianField::validate() const {
    const std::size_t m = size();
    if (positions.size() != 3 * m || rotations.size() != 4 * m || log_scales.size() != 3 * m ||
        sh.size() != sh_stride() * m || grad_accum.size() != m || grad_count.size() != m) {
        throw Error(ErrorCode::SizeMismatch, "per-Gaussian buffers disagree on the primitive count");
    }
    if (sh_degree < 0 || sh_degree > kMaxShDegree) {
        throw Error(ErrorCode::DegreeMismatch, "SH degree must be in 0..3");
    }
}

} // namespace sparsesplat
