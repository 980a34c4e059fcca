#pragma once

#include "sparsesplat/camera.hpp"
#include "sparsesplat/gaussian_field.hpp"
#include "sparsesplat/image.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace sparsesplat {

/// Per-view feature map, K×H×W channel-major at pixel resolution.
struct FeatureMap {
    int view_id = 0;
    int dims = 0;
    int height = 0;
    int width = 0;
    std::vector<float> data;

    float at(int k, int x, int y) const {
        return data[(static_cast<std::size_t>(k) * height + static_cast<std::size_t>(y)) * width +
                    static_cast<std::size_t>(x)];
    }
};

/// Feature maps for a set of views sharing one level layout. Levels are stored
/// lowest first; level_dims sums to the channel count.
struct FeatureStack {
    std::vector<int> level_dims;
    std::vector<FeatureMap> maps;

    int total_dims() const;
    const FeatureMap& for_view(int view_id) const; // FeatureViewMismatch when absent
    void validate() const;
};

/// Built-in multi-scale provider. Level l blurs with σ = 2^(l-1), subsamples by
/// the same factor, builds [centered color, gradient magnitude] channels,
/// replicates them cyclically to K_l dims, upsamples bilinearly to H×W and
/// L2-normalizes each level per pixel.
FeatureMap pyramid_features(const Image& image, std::span<const int> level_dims);

FeatureStack pyramid_feature_stack(const std::vector<CameraView>& views, std::span<const int> level_dims);

/// Bilinear query at pixel (u, v). Returns false (Missing) outside
/// [0,W-1]×[0,H-1]; `out` must hold dims values.
bool query_feature(const FeatureMap& map, double u, double v, std::span<float> out);
std::optional<std::vector<float>> query_feature(const FeatureMap& map, double u, double v);

/// Kept feature dimensions at pruning step t (1-indexed): for t < L the
/// dimensions past Σ_{l ≤ L-t} K_l, for t ≥ L all of them. Throws InvalidStep
/// when t < 1.
std::vector<std::uint8_t> level_mask(int t, std::span<const int> level_dims);

/// Cosine similarity of the masked sub-vectors; 0 when either norm < 1e-12.
double masked_similarity(std::span<const float> fm, std::span<const float> fn, std::span<const std::uint8_t> mask);

struct PruneDecision {
    std::vector<std::uint8_t> mask;            // 1 = prune
    std::vector<int> valid_view_count;
    std::vector<double> pairwise_sims;         // M × pairs, NaN for invalid pairs; empty unless requested
    std::size_t pair_count = 0;

    std::size_t pruned() const;
};

/// Projects every Gaussian mean into every view, compares features over each
/// pair of views where the query succeeds, and marks it for pruning when all
/// similarities fall below tau. Gaussians seen in fewer than two views are
/// never pruned.
PruneDecision compute_prune_mask(const GaussianField& field, const std::vector<CameraView>& views,
                                 const FeatureStack& features, int t, double tau, bool keep_pairwise = false);

/// Removes the primitives marked in the decision; throws SizeMismatch.
GaussianField apply_prune(const GaussianField& field, const PruneDecision& decision);

// Feature-stack file: "MCFS", u32 version, u32 n_views, u32 L, L×u32 dims, then
// per view u32 view_id, u32 H, u32 W and K·H·W float32, all little-endian.
void write_feature_stack(const std::filesystem::path& path, const FeatureStack& stack);
FeatureStack read_feature_stack(const std::filesystem::path& path);

} // namespace sparsesplat
