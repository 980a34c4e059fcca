#pragma once

#include "sparsesplat/image.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <string>
#include <vector>

namespace sparsesplat {

/// Divisor guard for perspective projection.
inline constexpr double kNearPlane = 1e-6;

/// A posed, calibrated view. rotation/translation map world points into the
/// camera frame (x right, y down, z forward).
struct CameraView {
    int view_id = 0;
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();
    int width = 1;
    int height = 1;
    Image image;            // H×W×3 in [0,1]; may be empty for pose-only views
    std::string image_path; // relative to the camera file, as stored on disk

    Eigen::Vector3d center() const { return -rotation.transpose() * translation; }
    Eigen::Vector3d to_camera(const Eigen::Vector3d& world) const { return rotation * world + translation; }

    /// Throws InvalidArgument when an invariant (orthonormal rotation, positive
    /// focal lengths, image size and range) does not hold.
    void validate() const;
};

struct Ray {
    Eigen::Vector3d origin;
    Eigen::Vector3d direction; // unit length
};

struct Projection {
    Eigen::Vector2d pixel;
    double depth = 0.0; // camera-frame z
};

/// Perspective projection of a camera-frame point; throws BehindCamera when
/// z <= kNearPlane.
Eigen::Vector2d project_camera_point(const Eigen::Vector3d& camera_point, const CameraView& view);

Projection project_point(const Eigen::Vector3d& world, const CameraView& view);

/// Ray through a pixel center; throws OutOfBounds outside [0,W)×[0,H).
Ray pixel_ray(const CameraView& view, const Eigen::Vector2d& pixel);

bool in_image(const CameraView& view, const Eigen::Vector2d& pixel);

/// World-to-camera pose for a camera at `eye` looking at `target`.
void look_at(CameraView& view, const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
             const Eigen::Vector3d& up);

const CameraView& find_view(const std::vector<CameraView>& views, int view_id);

// Camera file: JSON array of {view_id, fx, fy, cx, cy, rotation[9] row-major,
// translation[3], width, height, image_path}.
std::vector<CameraView> load_cameras(const std::filesystem::path& path, bool load_images = true);
void save_cameras(const std::filesystem::path& path, const std::vector<CameraView>& views);

} // namespace sparsesplat
