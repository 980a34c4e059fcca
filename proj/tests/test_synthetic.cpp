#include "sparsesplat/error.hpp"
#include "sparsesplat/initializer.hpp"
#include "sparsesplat/synthetic.hpp"

#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace sparsesplat;

TEST(Synthetic, SingleGaussianProjectsToCenter) {
    SceneOptions opt;
    opt.n_gaussians = 1;
    opt.n_views = 3;
    opt.width = 33;
    opt.height = 33;
    const SyntheticScene s = make_scene(opt);
    ASSERT_EQ(s.gt_field.size(), 1u);
    EXPECT_EQ(s.gt_field.position(0), Eigen::Vector3d::Zero());
    for (const auto& v : s.views) {
        const Projection p = project_point(Eigen::Vector3d::Zero(), v);
        EXPECT_NEAR(p.pixel.x(), 16.0, 1e-9);
        EXPECT_NEAR(p.pixel.y(), 16.0, 1e-9);
        // Brightest pixel at the center.
        double best = -1;
        int bx = 0, by = 0;
        for (int y = 0; y < 33; ++y)
            for (int x = 0; x < 33; ++x) {
                const double l = v.image.at(x, y, 0) + v.image.at(x, y, 1) + v.image.at(x, y, 2);
                if (l > best) best = l, bx = x, by = y;
            }
        EXPECT_NEAR(bx, 16, 1);
        EXPECT_NEAR(by, 16, 1);
    }
}

TEST(Synthetic, Deterministic) {
    SceneOptions opt;
    opt.seed = 11;
    opt.n_gaussians = 20;
    const SyntheticScene a = make_scene(opt), b = make_scene(opt);
    EXPECT_EQ(a.gt_field.positions, b.gt_field.positions);
    EXPECT_EQ(a.views[2].image.data, b.views[2].image.data);
    const auto ma = generate_matches(a, 30, 0.3, 2), mb = generate_matches(b, 30, 0.3, 2);
    for (std::size_t i = 0; i < ma.size(); ++i) EXPECT_EQ(ma[i].pixel_s, mb[i].pixel_s);
    opt.seed = 12;
    EXPECT_NE(make_scene(opt).gt_field.positions, a.gt_field.positions);
}

TEST(Synthetic, ShellSamplesSeenTwice) {
    SceneOptions opt;
    opt.preset = ScenePreset::Shell;
    opt.n_gaussians = 100;
    opt.n_views = 8;
    opt.seed = 7;
    const SyntheticScene s = make_scene(opt);
    std::size_t twice = 0;
    for (const auto& sample : s.surface_samples) twice += sample.visible_views.size() >= 2 ? 1 : 0;
    EXPECT_EQ(twice, s.surface_samples.size());
    EXPECT_EQ(s.heldout.size(), 8u);
    EXPECT_EQ(s.heldout.front().view_id, 8);
}

TEST(Synthetic, ImagesMatchReferenceRenderer) {
    for (ScenePreset preset : {ScenePreset::Cluster, ScenePreset::Plane, ScenePreset::Shell}) {
        SceneOptions opt;
        opt.preset = preset;
        opt.n_gaussians = 25;
        opt.n_views = 2;
        opt.n_heldout = 1;
        opt.width = 24;
        opt.height = 20;
        const SyntheticScene s = make_scene(opt);
        for (const auto& v : s.views) {
            const auto ref = oracle::reference_render(s.gt_field, v, s.background);
            for (std::size_t k = 0; k < ref.color.size(); ++k) {
                EXPECT_NEAR(v.image.data[k], std::clamp(ref.color[k], 0.0, 1.0), 0.5 / 255 + 1e-4);
            }
        }
    }
}

TEST(Synthetic, MatchesLieOnGroundTruth) {
    SceneOptions opt;
    opt.preset = ScenePreset::Plane;
    const SyntheticScene s = make_scene(opt);
    for (const auto& m : generate_matches(s, 50, 0.0, 3)) {
        EXPECT_NE(m.view_s, m.view_t);
        EXPECT_TRUE(in_image(find_view(s.views, m.view_s), m.pixel_s));
        EXPECT_TRUE(in_image(find_view(s.views, m.view_t), m.pixel_t));
    }
}

TEST(Synthetic, InvalidOptions) {
    SceneOptions opt;
    opt.n_views = 1;
    try {
        make_scene(opt);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InvalidArgument);
    }
    try {
        parse_scene_preset("torus");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InvalidArgument);
    }
}

TEST(Synthetic, DatasetRoundTrip) {
    SceneOptions opt;
    opt.n_gaussians = 10;
    opt.n_views = 3;
    opt.width = 16;
    opt.height = 16;
    const SyntheticScene s = make_scene(opt);
    const auto dir = std::filesystem::temp_directory_path() / "sparsesplat_dataset";
    std::filesystem::remove_all(dir);
    write_dataset(dir, s, generate_matches(s, 10, 0.0, 1));
    const auto views = load_cameras(dir / "cameras.json");
    ASSERT_EQ(views.size(), 3u);
    EXPECT_EQ(views[1].image.data, s.views[1].image.data);
    EXPECT_NEAR((views[2].rotation - s.views[2].rotation).norm(), 0.0, 1e-12);
    EXPECT_EQ(load_cameras(dir / "heldout" / "cameras.json").size(), 3u);
    EXPECT_EQ(read_matches(dir / "matches.txt").size(), 10u);
    std::filesystem::remove_all(dir);
}
