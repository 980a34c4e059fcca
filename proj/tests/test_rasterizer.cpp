#include "sparsesplat/error.hpp"
#include "sparsesplat/parallel.hpp"
#include "sparsesplat/rasterizer.hpp"

#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace sparsesplat;

namespace {

struct RandomScene {
    GaussianField field;
    CameraView view;
    Eigen::Vector3d bg;
};

RandomScene random_scene(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    RandomScene s;
    const std::size_t n = 1 + static_cast<std::size_t>(u(rng) * 99);
    s.field = oracle::random_field(rng, n, static_cast<int>(u(rng) * 4), 1.0, 0.03, 0.35, 0.05, 0.99);
    const int w = 24 + static_cast<int>(u(rng) * 24);
    const int h = 20 + static_cast<int>(u(rng) * 24);
    s.view = oracle::make_camera(0, {2 * u(rng) - 1, 2 * u(rng) - 1, -3.0 - u(rng)}, w, h, 0.9 * w);
    s.bg = {u(rng), u(rng), u(rng)};
    return s;
}

} // namespace

TEST(Rasterizer, EmptyFieldRendersBackground) {
    GaussianField f(1);
    const CameraView v = oracle::make_camera(0, {0, 0, -4}, 8, 6, 10);
    const RenderOutput out = render(f, v, {0.1, 0.2, 0.3});
    for (std::size_t p = 0; p < 48; ++p) {
        EXPECT_DOUBLE_EQ(out.color[3 * p], 0.1);
        EXPECT_DOUBLE_EQ(out.color[3 * p + 2], 0.3);
        EXPECT_DOUBLE_EQ(out.alpha[p], 0.0);
        EXPECT_DOUBLE_EQ(out.depth_normalized[p], 0.0);
    }
}

TEST(Rasterizer, SingleOpaqueGaussianCenterPixel) {
    GaussianField f(0);
    std::vector<double> sh{(1.0 - 0.5) / kShC0, (0.0 - 0.5) / kShC0, (0.0 - 0.5) / kShC0};
    f.append({0, 0, 0}, {1, 0, 0, 0}, Eigen::Vector3d::Constant(std::log(0.3)), logit(0.999), sh);
    const CameraView v = oracle::make_camera(0, {0, 0, -4}, 9, 9, 20);
    const RenderOutput out = render(f, v, {0, 0, 0});
    const std::size_t c = 4 * 9 + 4;
    // Center α is clamped to 0.99.
    EXPECT_NEAR(out.alpha[c], 0.99, 1e-12);
    EXPECT_NEAR(out.color[3 * c], 0.99, 1e-12);
    EXPECT_NEAR(out.depth_normalized[c], 4.0, 1e-12);
}

TEST(Rasterizer, MatchesReferenceRenderer) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const RandomScene s = random_scene(100 + seed);
        const RenderOutput out = render(s.field, s.view, s.bg);
        const oracle::ReferenceImage ref = oracle::reference_render(s.field, s.view, s.bg);
        double worst = 0.0;
        for (std::size_t k = 0; k < out.color.size(); ++k) worst = std::max(worst, std::abs(out.color[k] - ref.color[k]));
        EXPECT_LE(worst, 1e-4) << "seed " << seed;
        for (std::size_t p = 0; p < out.alpha.size(); ++p) {
            EXPECT_GE(out.alpha[p], 0.0);
            EXPECT_LE(out.alpha[p], 1.0);
            EXPECT_NEAR(ref.weight_sum[p], ref.alpha[p], 1e-12);
            EXPECT_NEAR(out.alpha[p], ref.alpha[p], 1e-4);
        }
    }
}

TEST(Rasterizer, TileSizeDoesNotChangeImage) {
    const RandomScene s = random_scene(77);
    const RenderOutput a = render(s.field, s.view, s.bg, {16});
    const RenderOutput b = render(s.field, s.view, s.bg, {0});
    const RenderOutput c = render(s.field, s.view, s.bg, {5});
    EXPECT_EQ(a.color, b.color);
    EXPECT_EQ(a.color, c.color);
    EXPECT_EQ(a.depth, c.depth);
}

TEST(Rasterizer, ThreadCountDoesNotChangeResults) {
    const RandomScene s = random_scene(31);
    Image target(s.view.width, s.view.height, 3, 0.4);
    std::vector<SplatGradients> grads;
    std::vector<std::vector<double>> colors;
    for (int threads : {1, 3}) {
        set_num_threads(threads);
        Rasterizer r;
        const RenderOutput out = r.forward(s.field, s.view, s.bg);
        Image g;
        photometric_loss(out.color_image(), target, 0.2, &g);
        std::vector<double> gd(out.depth.size(), 0.01);
        grads.push_back(r.backward(s.field, s.view, s.bg, g.data, gd));
        colors.push_back(out.color);
    }
    set_num_threads(1);
    EXPECT_EQ(colors[0], colors[1]);
    EXPECT_EQ(grads[0].d_positions, grads[1].d_positions);
    EXPECT_EQ(grads[0].d_sh, grads[1].d_sh);
    EXPECT_EQ(grads[0].d_rotations, grads[1].d_rotations);
}

TEST(Rasterizer, NearPlaneCulled) {
    GaussianField f(0);
    f.append({0, 0, -4.0}, {1, 0, 0, 0}, {0, 0, 0}, logit(0.9), std::vector<double>{1.0, 1.0, 1.0});
    const CameraView v = oracle::make_camera(0, {0, 0, -4}, 8, 8, 10);
    const RenderOutput out = render(f, v, {0, 0, 0});
    EXPECT_EQ(out.visible[0], 0);
    for (double a : out.alpha) EXPECT_EQ(a, 0.0);
}

TEST(Rasterizer, BackwardWithoutForwardThrows) {
    Rasterizer r;
    GaussianField f(0);
    const CameraView v = oracle::make_camera(0, {0, 0, -4}, 4, 4, 10);
    std::vector<double> gc(48, 0.0), gd(16, 0.0);
    try {
        r.backward(f, v, {0, 0, 0}, gc, gd);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ForwardStateMissing);
    }
    r.forward(f, v, {0, 0, 0});
    CameraView other = v;
    other.view_id = 9;
    EXPECT_THROW(r.backward(f, other, {0, 0, 0}, gc, gd), Error);
    std::vector<double> short_gc(47, 0.0);
    try {
        r.backward(f, v, {0, 0, 0}, short_gc, gd);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
    }
}

TEST(Rasterizer, GradientsMatchFiniteDifferences) {
    for (std::uint64_t seed : {1u, 2u}) {
        const oracle::GradScene s = oracle::gradient_scene(seed);
        const auto r = oracle::finite_difference_check(s.field, s.views, s.targets, Eigen::Vector3d(0.1, 0.2, 0.3),
                                                       1.0, 1e-4, 1e-3, 1e-6);
        EXPECT_EQ(r.failures, 0u) << "worst " << r.worst_param << " rel " << r.worst_rel;
        EXPECT_EQ(r.checked, 5u * (3 + 4 + 3 + 1 + 12));
    }
}

TEST(Rasterizer, ProjectCovarianceDilated) {
    const CameraView v = oracle::make_camera(0, {0, 0, -4}, 8, 8, 10);
    const Eigen::Matrix2d c = project_covariance(Eigen::Matrix3d::Identity() * 0.01, {0, 0, 0}, v);
    // J = f/z on the optical axis.
    EXPECT_NEAR(c(0, 0), 0.01 * (10.0 / 4) * (10.0 / 4) + 0.3, 1e-12);
    EXPECT_NEAR(c(0, 1), 0.0, 1e-12);
    EXPECT_THROW(project_covariance(Eigen::Matrix3d::Identity(), {0, 0, -5}, v), Error);
}
