#include "sparsesplat/error.hpp"
#include "sparsesplat/gaussian_field.hpp"
#include "sparsesplat/ply.hpp"

#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <random>

using namespace sparsesplat;

TEST(Covariance, IdentityRotationUnitScale) {
    const Eigen::Matrix3d s = covariance_from({1, 0, 0, 0}, {1, 1, 1});
    EXPECT_NEAR((s - Eigen::Matrix3d::Identity()).norm(), 0.0, 1e-15);
}

TEST(Covariance, DiagonalScales) {
    const Eigen::Matrix3d s = covariance_from({1, 0, 0, 0}, {2, 3, 0.5});
    EXPECT_NEAR((s - Eigen::Vector3d(4, 9, 0.25).asDiagonal().toDenseMatrix()).norm(), 0.0, 1e-14);
}

TEST(Covariance, SymmetricPositiveDefiniteAndDoubleCover) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.05, 2.0);
    for (int i = 0; i < 500; ++i) {
        const Eigen::Vector4d q = oracle::random_unit_quaternion(rng) * u(rng);
        const Eigen::Vector3d s(u(rng), u(rng), u(rng));
        const Eigen::Matrix3d c = covariance_from(q, s);
        EXPECT_NEAR((c - c.transpose()).norm(), 0.0, 1e-12);
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(c);
        EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
        // Eigenvalues are the squared scales.
        std::array<double, 3> ev{es.eigenvalues()[0], es.eigenvalues()[1], es.eigenvalues()[2]};
        std::array<double, 3> s2{s[0] * s[0], s[1] * s[1], s[2] * s[2]};
        std::sort(s2.begin(), s2.end());
        for (int k = 0; k < 3; ++k) EXPECT_NEAR(ev[k], s2[k], 1e-10 * (1 + s2[k]));
        EXPECT_NEAR((covariance_from(-q, s) - c).norm(), 0.0, 1e-12);
    }
}

TEST(Covariance, ZeroQuaternionThrows) {
    try {
        covariance_from({0, 0, 0, 0}, {1, 1, 1});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ZeroQuaternion);
    }
}

TEST(EvaluateGaussian, PeakAndBound) {
    const Eigen::Matrix3d c = covariance_from({0.9, 0.1, -0.3, 0.2}, {0.5, 1.0, 2.0});
    const Eigen::Vector3d mu(1, 2, 3);
    EXPECT_DOUBLE_EQ(evaluate_gaussian(mu, mu, c), 1.0);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int i = 0; i < 200; ++i) {
        const Eigen::Vector3d x = mu + Eigen::Vector3d(n(rng), n(rng), n(rng));
        const double g = evaluate_gaussian(x, mu, c);
        EXPECT_GT(g, 0.0);
        EXPECT_LT(g, 1.0);
    }
}

TEST(EvaluateGaussian, SingularThrows) {
    Eigen::Matrix3d c = Eigen::Matrix3d::Identity();
    c(2, 2) = 1e-14;
    try {
        evaluate_gaussian({0, 0, 0}, {0, 0, 0}, c);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::SingularCovariance);
    }
}

TEST(SphericalHarmonics, DegreeZeroIsViewIndependent) {
    std::vector<double> sh{0.5, -0.2, 1.0};
    const Eigen::Vector3d a = sh_to_color(sh, Eigen::Vector3d(0, 0, 1), 0);
    const Eigen::Vector3d b = sh_to_color(sh, Eigen::Vector3d(1, 1, 0).normalized(), 0);
    EXPECT_NEAR((a - b).norm(), 0.0, 1e-15);
    EXPECT_NEAR(a[0], 0.5 * kShC0 + 0.5, 1e-15);
}

TEST(SphericalHarmonics, BandParity) {
    // Band l is even/odd under d → −d for even/odd l.
    std::mt19937_64 rng(9);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int i = 0; i < 50; ++i) {
        const Eigen::Vector3d d = Eigen::Vector3d(n(rng), n(rng), n(rng)).normalized();
        const auto a = sh_basis(d, 3);
        const auto b = sh_basis(-d, 3);
        for (int k = 0; k < 16; ++k) {
            const int l = k == 0 ? 0 : (k < 4 ? 1 : (k < 9 ? 2 : 3));
            EXPECT_NEAR(b[static_cast<std::size_t>(k)], (l % 2 ? -1.0 : 1.0) * a[static_cast<std::size_t>(k)], 1e-12);
        }
    }
}

TEST(SphericalHarmonics, DegreeOneAntipodalSum) {
    // Degree-1 only: c(d) + c(−d) = 2·(DC term + 0.5).
    std::vector<double> sh{0.3, 0.1, -0.2, 0.4, -0.7, 0.2, 0.05, 0.6, -0.3, 0.9, 0.1, 0.2};
    const Eigen::Vector3d d = Eigen::Vector3d(0.3, -0.5, 0.8).normalized();
    const Eigen::Vector3d s = sh_to_color(sh, d, 1) + sh_to_color(sh, -d, 1);
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(s[c], 2 * (kShC0 * sh[static_cast<std::size_t>(c)] + 0.5), 1e-12);
}

TEST(SphericalHarmonics, BasisOrthonormalOnSphere) {
    // Monte-Carlo style quadrature over a Fibonacci sphere.
    const int n = 20000;
    Eigen::Matrix<double, 16, 16> gram = Eigen::Matrix<double, 16, 16>::Zero();
    for (int i = 0; i < n; ++i) {
        const double y = 1 - 2.0 * (i + 0.5) / n;
        const double r = std::sqrt(1 - y * y);
        const double phi = i * 2.399963229728653;
        const auto b = sh_basis({r * std::cos(phi), y, r * std::sin(phi)}, 3);
        for (int a = 0; a < 16; ++a)
            for (int c = 0; c < 16; ++c) gram(a, c) += b[static_cast<std::size_t>(a)] * b[static_cast<std::size_t>(c)];
    }
    gram *= 4 * M_PI / n;
    EXPECT_NEAR((gram - Eigen::Matrix<double, 16, 16>::Identity()).cwiseAbs().maxCoeff(), 0.0, 1e-3);
}

TEST(SphericalHarmonics, GradientMatchesFiniteDifference) {
    const Eigen::Vector3d d(0.3, -0.4, 0.7);
    const auto g = sh_basis_gradient(d, 3);
    const double h = 1e-6;
    for (int a = 0; a < 3; ++a) {
        Eigen::Vector3d dp = d, dm = d;
        dp[a] += h;
        dm[a] -= h;
        const auto bp = sh_basis(dp, 3), bm = sh_basis(dm, 3);
        for (int k = 0; k < 16; ++k) {
            EXPECT_NEAR(g[static_cast<std::size_t>(k)][a],
                        (bp[static_cast<std::size_t>(k)] - bm[static_cast<std::size_t>(k)]) / (2 * h), 1e-7);
        }
    }
}

TEST(SphericalHarmonics, DegreeMismatchThrows) {
    std::vector<double> sh(12, 0.0);
    try {
        sh_to_color(sh, {0, 0, 1}, 2);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DegreeMismatch);
    }
}

TEST(GaussianField, AppendCompactValidate) {
    GaussianField f(1);
    for (int i = 0; i < 5; ++i) {
        f.append({double(i), 0, 0}, {1, 0, 0, 0}, {0, 0, 0}, double(i), std::vector<double>{double(i)});
    }
    EXPECT_EQ(f.size(), 5u);
    EXPECT_NO_THROW(f.validate());
    std::vector<std::uint8_t> keep{1, 0, 1, 0, 1};
    f.compact(keep);
    ASSERT_EQ(f.size(), 3u);
    EXPECT_DOUBLE_EQ(f.position(1).x(), 2.0);
    EXPECT_DOUBLE_EQ(f.opacity_logits[2], 4.0);
    EXPECT_DOUBLE_EQ(f.sh_of(2)[0], 4.0);
    EXPECT_DOUBLE_EQ(f.sh_of(2)[1], 0.0);
    f.positions.pop_back();
    EXPECT_THROW(f.validate(), Error);
}

TEST(GaussianField, PlyRoundTrip) {
    std::mt19937_64 rng(2);
    for (int degree = 0; degree <= 3; ++degree) {
        const GaussianField f = oracle::random_field(rng, 17, degree, 1.0, 0.05, 0.3, 0.1, 0.9);
        const auto path = std::filesystem::temp_directory_path() / "sparsesplat_field.ply";
        write_field_ply(path, f);
        const GaussianField g = read_field_ply(path);
        ASSERT_EQ(g.size(), f.size());
        EXPECT_EQ(g.sh_degree, degree);
        const auto close = [](const std::vector<double>& a, const std::vector<double>& b) {
            ASSERT_EQ(a.size(), b.size());
            for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a[k], b[k], 1e-6 * (1 + std::abs(a[k])));
        };
        close(f.positions, g.positions);
        close(f.rotations, g.rotations);
        close(f.log_scales, g.log_scales);
        close(f.opacity_logits, g.opacity_logits);
        close(f.sh, g.sh);
        std::filesystem::remove(path);
    }
}
