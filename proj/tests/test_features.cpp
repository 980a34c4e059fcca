#include "sparsesplat/error.hpp"
#include "sparsesplat/features.hpp"

#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <numeric>
#include <numbers>
#include <random>

using namespace sparsesplat;

namespace {

const std::vector<int> kDims{64, 64, 128, 256};

FeatureMap random_map(std::mt19937_64& rng, int view_id, const std::vector<int>& dims, int w, int h,
                      const std::vector<float>& base, double noise) {
    std::normal_distribution<double> n(0.0, 1.0);
    FeatureMap m;
    m.view_id = view_id;
    m.dims = std::accumulate(dims.begin(), dims.end(), 0);
    m.width = w;
    m.height = h;
    m.data.resize(static_cast<std::size_t>(m.dims) * static_cast<std::size_t>(w * h));
    for (int k = 0; k < m.dims; ++k) {
        for (int p = 0; p < w * h; ++p) {
            m.data[static_cast<std::size_t>(k * w * h + p)] =
                static_cast<float>(base[static_cast<std::size_t>(k)] + noise * n(rng));
        }
    }
    return m;
}

} // namespace

TEST(LevelMask, MatchesDirectRule) {
    for (int t = 1; t <= 6; ++t) {
        EXPECT_EQ(level_mask(t, kDims), oracle::level_mask_direct(t, kDims)) << "t=" << t;
    }
    const auto m1 = level_mask(1, kDims);
    EXPECT_EQ(std::accumulate(m1.begin(), m1.end(), 0), 256);
    EXPECT_EQ(m1[255], 0);
    EXPECT_EQ(m1[256], 1);
    const auto m4 = level_mask(4, kDims);
    EXPECT_EQ(std::accumulate(m4.begin(), m4.end(), 0), 512);
}

TEST(LevelMask, MonotoneInStep) {
    const std::vector<int> dims{3, 5, 2, 7, 1};
    for (int t = 1; t < 8; ++t) {
        const auto a = level_mask(t, dims), b = level_mask(t + 1, dims);
        for (std::size_t k = 0; k < a.size(); ++k) EXPECT_LE(a[k], b[k]);
    }
}

TEST(LevelMask, InvalidStep) {
    for (int t : {0, -3}) {
        try {
            level_mask(t, kDims);
            FAIL();
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), ErrorCode::InvalidStep);
        }
    }
}

TEST(MaskedSimilarity, Basics) {
    const std::vector<float> a{1, 0, 3, 4}, b{9, 0, 6, 8}, z{5, 5, 0, 0};
    const std::vector<std::uint8_t> m{0, 0, 1, 1};
    EXPECT_NEAR(masked_similarity(a, b, m), 1.0, 1e-12);
    EXPECT_NEAR(masked_similarity(a, z, m), 0.0, 0.0);
    const std::vector<float> c{0, 0, -3, -4};
    EXPECT_NEAR(masked_similarity(a, c, m), -1.0, 1e-12);
    const std::vector<std::uint8_t> all{1, 1, 1, 1};
    const std::vector<double> ad(a.begin(), a.end()), cd(c.begin(), c.end());
    EXPECT_NEAR(masked_similarity(a, c, all), oracle::masked_cosine(ad, cd, {1, 1, 1, 1}), 1e-12);
}

TEST(QueryFeature, BilinearAndBounds) {
    FeatureMap m;
    m.dims = 1;
    m.width = 2;
    m.height = 2;
    m.data = {0, 1, 2, 3};
    const auto v = query_feature(m, 0.5, 0.5);
    ASSERT_TRUE(v);
    EXPECT_NEAR((*v)[0], 1.5f, 1e-6);
    EXPECT_TRUE(query_feature(m, 1.0, 1.0));
    EXPECT_FALSE(query_feature(m, 1.01, 0.0));
    EXPECT_FALSE(query_feature(m, -0.01, 0.0));
}

TEST(PruneMask, RandomCasesMatchDirectRule) {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> n(0.0, 1.0);
    const std::vector<int> dims{2, 3, 4};
    int checked = 0, pruned = 0, kept = 0;
    for (int c = 0; c < 1000; ++c) {
        const int n_views = 2 + static_cast<int>(u(rng) * 3);
        std::vector<CameraView> views;
        FeatureStack stack;
        stack.level_dims = dims;
        std::vector<float> base(9);
        for (auto& b : base) b = static_cast<float>(n(rng));
        const double noise = 0.2 + 1.5 * u(rng);
        for (int v = 0; v < n_views; ++v) {
            const double az = 2.0 * std::numbers::pi * u(rng);
            const Eigen::Vector3d eye(3 * std::sin(az), 0.6 * (2 * u(rng) - 1), 3 * std::cos(az));
            views.push_back(oracle::make_camera(10 + v, eye, 6, 5, 6.0));
            stack.maps.push_back(random_map(rng, 10 + v, dims, 6, 5, base, noise));
        }
        GaussianField field(0);
        const std::vector<double> sh(3, 0.0);
        for (int g = 0; g < 4; ++g) {
            const Eigen::Vector3d mu(1.2 * (2 * u(rng) - 1), 1.2 * (2 * u(rng) - 1), 1.2 * (2 * u(rng) - 1));
            field.append(mu, {1, 0, 0, 0}, Eigen::Vector3d::Constant(-2.0), 0.0, sh);
        }
        const int t = 1 + static_cast<int>(u(rng) * 4);
        const double tau = 0.1 + 0.9 * u(rng);
        const PruneDecision d = compute_prune_mask(field, views, stack, t, tau);
        ASSERT_EQ(d.mask.size(), field.size());
        for (std::size_t g = 0; g < field.size(); ++g) {
            const oracle::PruneOracle o = oracle::prune_direct(field.position(g), views, stack, t, tau);
            EXPECT_EQ(d.valid_view_count[g], o.valid_views);
            if (o.closest_margin < 1e-6) continue;
            ++checked;
            EXPECT_EQ(d.mask[g] != 0, o.prune) << "case " << c << " gaussian " << g;
            if (o.valid_views < 2) EXPECT_EQ(d.mask[g], 0);
            (d.mask[g] ? pruned : kept) += 1;
        }
    }
    EXPECT_GT(checked, 3500);
    EXPECT_GT(pruned, 100);
    EXPECT_GT(kept, 100);
}

TEST(PruneMask, SingleViewNeverPruned) {
    std::mt19937_64 rng(3);
    const std::vector<int> dims{2, 2};
    FeatureStack stack;
    stack.level_dims = dims;
    std::vector<CameraView> views{oracle::make_camera(0, {0, 0, -3}, 8, 8, 8.0)};
    stack.maps.push_back(random_map(rng, 0, dims, 8, 8, {1, 0, 0, 1}, 1.0));
    GaussianField field(0);
    field.append({0, 0, 0}, {1, 0, 0, 0}, Eigen::Vector3d::Constant(-2.0), 0.0, std::vector<double>(3, 0.0));
    const PruneDecision d = compute_prune_mask(field, views, stack, 1, 2.0);
    EXPECT_EQ(d.mask[0], 0);
    EXPECT_EQ(d.valid_view_count[0], 1);
}

TEST(PruneMask, OppositeFeaturesPrunedIdenticalKept) {
    const std::vector<int> dims{1, 2};
    FeatureStack stack;
    stack.level_dims = dims;
    std::vector<CameraView> views{oracle::make_camera(0, {0.3, 0, -3}, 4, 4, 4.0),
                                  oracle::make_camera(1, {-0.3, 0, -3}, 4, 4, 4.0)};
    std::mt19937_64 rng(0);
    stack.maps.push_back(random_map(rng, 0, dims, 4, 4, {1, 1, 0}, 0.0));
    stack.maps.push_back(random_map(rng, 1, dims, 4, 4, {1, -1, 0}, 0.0));
    GaussianField field(0);
    field.append({0, 0, 0}, {1, 0, 0, 0}, Eigen::Vector3d::Constant(-2.0), 0.0, std::vector<double>(3, 0.0));
    // t = 1 keeps only the last level where the features are opposite.
    EXPECT_EQ(compute_prune_mask(field, views, stack, 1, 0.5).mask[0], 1);
    // t = 2 adds the first channel: cosine 0.
    EXPECT_EQ(compute_prune_mask(field, views, stack, 2, 0.5).mask[0], 1);
    EXPECT_EQ(compute_prune_mask(field, views, stack, 2, -0.1).mask[0], 0);
    const GaussianField after = apply_prune(field, compute_prune_mask(field, views, stack, 1, 0.5));
    EXPECT_EQ(after.size(), 0u);
}

TEST(PruneMask, MissingViewAndSizeMismatch) {
    const std::vector<int> dims{1, 1};
    FeatureStack stack;
    stack.level_dims = dims;
    std::mt19937_64 rng(0);
    stack.maps.push_back(random_map(rng, 0, dims, 4, 4, {1, 1}, 0.0));
    std::vector<CameraView> views{oracle::make_camera(0, {0.3, 0, -3}, 4, 4, 4.0),
                                  oracle::make_camera(7, {-0.3, 0, -3}, 4, 4, 4.0)};
    GaussianField field(0);
    field.append({0, 0, 0}, {1, 0, 0, 0}, Eigen::Vector3d::Constant(-2.0), 0.0, std::vector<double>(3, 0.0));
    try {
        compute_prune_mask(field, views, stack, 1, 0.5);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::FeatureViewMismatch);
    }
    PruneDecision d;
    d.mask = {1, 0};
    try {
        apply_prune(field, d);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::SizeMismatch);
    }
}

TEST(FeatureStackIo, RoundTrip) {
    std::mt19937_64 rng(5);
    const std::vector<int> dims{2, 3};
    FeatureStack stack;
    stack.level_dims = dims;
    stack.maps.push_back(random_map(rng, 4, dims, 5, 3, {0, 1, 2, 3, 4}, 1.0));
    stack.maps.push_back(random_map(rng, 9, dims, 5, 3, {0, 1, 2, 3, 4}, 1.0));
    const auto path = std::filesystem::temp_directory_path() / "sparsesplat_features.bin";
    write_feature_stack(path, stack);
    const FeatureStack back = read_feature_stack(path);
    EXPECT_EQ(back.level_dims, dims);
    ASSERT_EQ(back.maps.size(), 2u);
    EXPECT_EQ(back.for_view(9).data, stack.maps[1].data);
    EXPECT_EQ(back.maps[0].width, 5);
    EXPECT_EQ(back.maps[0].height, 3);
    std::filesystem::remove(path);
}

TEST(PyramidFeatures, ShapeAndUnitNormPerLevel) {
    Image img(16, 12, 3);
    for (int y = 0; y < 12; ++y)
        for (int x = 0; x < 16; ++x)
            for (int c = 0; c < 3; ++c) img.at(x, y, c) = 0.5 + 0.4 * std::sin(0.3 * x * (c + 1) + 0.2 * y);
    const std::vector<int> dims{4, 4, 8};
    const FeatureMap m = pyramid_features(img, dims);
    EXPECT_EQ(m.dims, 16);
    EXPECT_EQ(m.width, 16);
    EXPECT_EQ(m.height, 12);
    for (int y = 0; y < 12; ++y) {
        for (int x = 0; x < 16; ++x) {
            int offset = 0;
            for (int d : dims) {
                double norm = 0;
                for (int k = offset; k < offset + d; ++k) norm += m.at(k, x, y) * m.at(k, x, y);
                EXPECT_NEAR(norm, 1.0, 1e-4);
                offset += d;
            }
        }
    }
}
