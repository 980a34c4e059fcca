#pragma once

#include "sparsesplat/camera.hpp"
#include "sparsesplat/gaussian_field.hpp"
#include "sparsesplat/initializer.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

namespace sparsesplat {

enum class ScenePreset { Cluster, Plane, Shell };

ScenePreset parse_scene_preset(std::string_view name);
std::string_view to_string(ScenePreset preset);

struct SceneOptions {
    ScenePreset preset = ScenePreset::Cluster;
    int n_gaussians = 100;
    int n_views = 4;
    int n_heldout = -1; // < 0: same as n_views
    int width = 256;
    int height = 256;
    int sh_degree = 1;
    std::uint64_t seed = 0;
};

struct SurfaceSample {
    Eigen::Vector3d point;
    Eigen::Vector3d color;
    std::vector<int> visible_views; // in front of the camera and inside the image
};

/// Ground-truth scene: generating Gaussians, views rendered from them, and the
/// Gaussian means as surface samples.
struct SyntheticScene {
    ScenePreset preset = ScenePreset::Cluster;
    GaussianField gt_field;
    std::vector<CameraView> views;
    std::vector<CameraView> heldout;
    std::vector<SurfaceSample> surface_samples;
    Eigen::Vector3d background = Eigen::Vector3d::Zero();
    double diameter = 0.0;
};

/// Deterministic in `seed`. Cluster and plane place cameras on a forward-facing
/// arc, shell on a surrounding sphere; held-out cameras follow the same rule at
/// interleaved angles. Images are quantized to 8 bits so they survive PNG I/O.
SyntheticScene make_scene(const SceneOptions& options);

/// Oracle correspondences: each match picks a surface sample visible in at
/// least two views, projects it into two of them and perturbs both pixels with
/// N(0, pixel_noise_std²). Throws InsufficientVisibility.
CorrespondenceSet generate_matches(const SyntheticScene& scene, int n_matches, double pixel_noise_std,
                                   std::uint64_t seed);

/// Writes cameras.json, images/, matches.txt, gt.ply and heldout/ under `dir`.
void write_dataset(const std::filesystem::path& dir, const SyntheticScene& scene, const CorrespondenceSet& matches);

} // namespace sparsesplat
