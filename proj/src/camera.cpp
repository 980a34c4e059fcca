#include "sparsesplat/camera.hpp"

#include "sparsesplat/error.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>

namespace sparsesplat {

void CameraView::validate() const {
    const double ortho = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    if (ortho > 1e-9 || std::abs(rotation.determinant() - 1.0) > 1e-9) {
        throw Error(ErrorCode::InvalidArgument, "view " + std::to_string(view_id) + ": rotation is not a proper rotation");
    }
    if (!(fx > 0.0) || !(fy > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "view " + std::to_string(view_id) + ": focal lengths must be positive");
    }
    if (width < 1 || height < 1) {
        throw Error(ErrorCode::InvalidArgument, "view " + std::to_string(view_id) + ": image size must be positive");
    }
    if (!image.empty()) {
        if (image.width != width || image.height != height || image.channels != 3) {
            throw Error(ErrorCode::ShapeMismatch, "view " + std::to_string(view_id) + ": image shape disagrees with camera");
        }
        for (double value : image.data) {
            if (!(value >= 0.0 && value <= 1.0)) {
                throw Error(ErrorCode::InvalidArgument, "view " + std::to_string(view_id) + ": pixel outside [0,1]");
            }
        }
    }
}

Eigen::Vector2d project_camera_point(const Eigen::Vector3d& p, const CameraView& view) {
    if (!(p.z() > kNearPlane)) {
        throw Error(ErrorCode::BehindCamera, "point is behind the camera");
    }
    return {view.fx * p.x() / p.z() + view.cx, view.fy * p.y() / p.z() + view.cy};
}

Projection project_point(const Eigen::Vector3d& world, const CameraView& view) {
    const Eigen::Vector3d p = view.to_camera(world);
    return {project_camera_point(p, view), p.z()};
}

bool in_image(const CameraView& view, const Eigen::Vector2d& pixel) {
    return pixel.x() >= 0.0 && pixel.y() >= 0.0 && pixel.x() <= view.width - 1 && pixel.y() <= view.height - 1;
}

Ray pixel_ray(const CameraView& view, const Eigen::Vector2d& pixel) {
    if (!(pixel.x() >= 0.0 && pixel.x() < view.width && pixel.y() >= 0.0 && pixel.y() < view.height)) {
        throw Error(ErrorCode::OutOfBounds, "pixel outside the image");
    }
    const Eigen::Vector3d camera_dir((pixel.x() - view.cx) / view.fx, (pixel.y() - view.cy) / view.fy, 1.0);
    return {view.center(), (view.rotation.transpose() * camera_dir).normalized()};
}

void look_at(CameraView& view, const Eigen::Vector3d& eye, const Eigen::Vector3d& target, const Eigen::Vector3d& up) {
    const Eigen::Vector3d forward = (target - eye).normalized();
    Eigen::Vector3d right = forward.cross(up);
    if (right.norm() < 1e-6) {
        right = forward.cross(Eigen::Vector3d::UnitX());
    }
    right.normalize();
    const Eigen::Vector3d down = forward.cross(right);
    view.rotation.row(0) = right.transpose();
    view.rotation.row(1) = down.transpose();
    view.rotation.row(2) = forward.transpose();
    view.translation = -view.rotation * eye;
}

const CameraView& find_view(const std::vector<CameraView>& views, int view_id) {
    for (const auto& view : views) {
        if (view.view_id == view_id) {
            return view;
        }
    }
    throw Error(ErrorCode::UnknownView, "unknown view id " + std::to_string(view_id));
}

std::vector<CameraView> load_cameras(const std::filesystem::path& path, bool load_images) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::IoError, "cannot open " + path.string());
    }
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
    }
    if (!doc.is_array()) {
        throw Error(ErrorCode::ParseError, path.string() + ": expected a JSON array");
    }
    std::vector<CameraView> views;
    for (const auto& entry : doc) {
        CameraView view;
        try {
            view.view_id = entry.at("view_id").get<int>();
            view.fx = entry.at("fx").get<double>();
            view.fy = entry.at("fy").get<double>();
            view.cx = entry.at("cx").get<double>();
            view.cy = entry.at("cy").get<double>();
            const auto rot = entry.at("rotation").get<std::vector<double>>();
            const auto trans = entry.at("translation").get<std::vector<double>>();
            if (rot.size() != 9 || trans.size() != 3) {
                throw Error(ErrorCode::ParseError, "rotation needs 9 values and translation 3");
            }
            for (int r = 0; r < 3; ++r) {
                for (int c = 0; c < 3; ++c) {
                    view.rotation(r, c) = rot[static_cast<std::size_t>(r * 3 + c)];
                }
                view.translation[r] = trans[static_cast<std::size_t>(r)];
            }
            view.width = entry.at("width").get<int>();
            view.height = entry.at("height").get<int>();
            view.image_path = entry.value("image_path", std::string{});
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
        }
        if (load_images && !view.image_path.empty()) {
            view.image = read_png(path.parent_path() / view.image_path);
        }
        view.validate();
        views.push_back(std::move(view));
    }
    return views;
}

void save_cameras(const std::filesystem::path& path, const std::vector<CameraView>& views) {
    nlohmann::json doc = nlohmann::json::array();
    for (const auto& view : views) {
        std::vector<double> rot(9);
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) {
                rot[static_cast<std::size_t>(r * 3 + c)] = view.rotation(r, c);
            }
        }
        doc.push_back({{"view_id", view.view_id},
                       {"fx", view.fx},
                       {"fy", view.fy},
                       {"cx", view.cx},
                       {"cy", view.cy},
                       {"rotation", rot},
                       {"translation", {view.translation.x(), view.translation.y(), view.translation.z()}},
                       {"width", view.width},
                       {"height", view.height},
                       {"image_path", view.image_path}});
    }
    std::ofstream out(path);
    if (!out) {
        throw Error(ErrorCode::IoError, "cannot write " + path.string());
    }
    out << doc.dump(2) << '\n';
}

} // namespace sparsesplat
