#pragma once

#include "sparsesplat/camera.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace sparsesplat {

struct Correspondence {
    int view_s = 0;
    int view_t = 0;
    Eigen::Vector2d pixel_s;
    Eigen::Vector2d pixel_t;
    double confidence = 1.0;
};

using CorrespondenceSet = std::vector<Correspondence>;

enum class PointSource : std::uint8_t { Matched = 0, Filled = 1 };

struct PointCloudSeed {
    std::vector<Eigen::Vector3d> positions;
    std::vector<Eigen::Vector3d> colors;
    std::vector<PointSource> source;

    std::size_t size() const { return positions.size(); }
    std::size_t count(PointSource kind) const;
    void push_back(const Eigen::Vector3d& position, const Eigen::Vector3d& color, PointSource kind);
};

struct Midpoint {
    Eigen::Vector3d point = Eigen::Vector3d::Zero();
    bool valid = false;
};

/// Midpoint of the closest points of two rays. Invalid for near-parallel rays
/// (|sin θ| < 1e-4) or when either closest point lies behind its origin.
Midpoint triangulate_midpoint(const Ray& ray_s, const Ray& ray_t);

/// One Matched point per valid correspondence, colored with the mean of the
/// bilinearly sampled pixel colors. Throws UnknownView.
PointCloudSeed build_seed_cloud(const CorrespondenceSet& matches, const std::vector<CameraView>& views);

/// Statistical k-NN filter: drops Matched points whose mean distance to their k
/// nearest neighbors exceeds mean + std_ratio·std of that statistic.
PointCloudSeed filter_outliers(const PointCloudSeed& cloud, int k, double std_ratio);

struct BoundingBox {
    Eigen::Vector3d min;
    Eigen::Vector3d max;
};

/// Box around the Matched points, dilated by `dilation` of the extent per side.
std::optional<BoundingBox> matched_bounds(const PointCloudSeed& cloud, double dilation = 0.1);

/// Box used when there are no Matched points: centered on the least-squares
/// intersection of the optical axes, half-size half the mean camera distance.
BoundingBox camera_bounds(const std::vector<CameraView>& views);

/// Voxel index along each axis, clamped to [0, resolution-1].
Eigen::Vector3i voxel_of(const Eigen::Vector3d& p, const BoundingBox& box, int resolution);

/// Draws n_fill uniform candidates in the box and appends those whose voxel
/// holds no Matched point. Throws DegenerateBox for a non-positive extent.
PointCloudSeed random_fill(const PointCloudSeed& cloud, const BoundingBox& box, int n_fill, int resolution,
                           std::uint64_t rng_seed);

/// 10·views·100 capped at 5000.
int default_fill_count(std::size_t n_views);

// Correspondence file: `view_s view_t u_s v_s u_t v_t confidence` per line,
// `#` starts a comment.
CorrespondenceSet read_matches(const std::filesystem::path& path);
void write_matches(const std::filesystem::path& path, const CorrespondenceSet& matches);

/// Binary PLY with float x,y,z, uchar red,green,blue and uchar source.
void write_seed_ply(const std::filesystem::path& path, const PointCloudSeed& cloud);
PointCloudSeed read_seed_ply(const std::filesystem::path& path);

} // namespace sparsesplat
