#include "sparsesplat/synthetic.hpp"

#include "sparsesplat/error.hpp"
#include "sparsesplat/ply.hpp"
#include "sparsesplat/rasterizer.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <string>

namespace sparsesplat {

namespace {

constexpr double kCameraDistance = 4.0;
constexpr double kFrameRadius = 1.35; // scene radius the field of view must cover
constexpr double kArcHalfWidth = 0.6; // radians

Eigen::Vector3d fibonacci_point(int i, int n, double offset) {
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    const double y = 1.0 - 2.0 * (i + 0.5) / n;
    const double r = std::sqrt(std::max(0.0, 1.0 - y * y));
    const double phi = golden * i + offset;
    return {r * std::cos(phi), y, r * std::sin(phi)};
}

CameraView make_view(int id, const Eigen::Vector3d& eye, const SceneOptions& options) {
    CameraView view;
    view.view_id = id;
    view.width = options.width;
    view.height = options.height;
    const double f = 0.5 * std::min(options.width, options.height) * kCameraDistance / kFrameRadius;
    view.fx = f;
    view.fy = f;
    view.cx = 0.5 * (options.width - 1);
    view.cy = 0.5 * (options.height - 1);
    look_at(view, eye, Eigen::Vector3d::Zero(), Eigen::Vector3d(0.0, -1.0, 0.0));
    return view;
}

// Forward-facing rule: azimuth sweeps an arc in front of the scene (−z side),
// elevation follows a fixed ripple of the azimuth.
Eigen::Vector3d arc_eye(double fraction) {
    const double az = -kArcHalfWidth + 2.0 * kArcHalfWidth * fraction;
    const double el = 0.15 * std::cos(3.0 * az);
    return kCameraDistance * Eigen::Vector3d(std::sin(az) * std::cos(el), std::sin(el), -std::cos(az) * std::cos(el));
}

std::vector<CameraView> make_views(const SceneOptions& options, int count, int first_id, bool heldout) {
    std::vector<CameraView> views;
    for (int i = 0; i < count; ++i) {
        Eigen::Vector3d eye;
        if (options.preset == ScenePreset::Shell) {
            eye = kCameraDistance * fibonacci_point(i, count, heldout ? 0.5 * std::numbers::pi : 0.0);
            if (heldout) {
                eye.y() = -eye.y();
            }
        } else {
            double fraction = count > 1 ? static_cast<double>(i) / (count - 1) : 0.5;
            if (heldout) {
                fraction = (i + 0.5) / count;
            }
            eye = arc_eye(fraction);
        }
        views.push_back(make_view(first_id + i, eye, options));
    }
    return views;
}

Eigen::Vector4d random_quaternion(std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::Vector4d q(normal(rng), normal(rng), normal(rng), normal(rng));
    return q.normalized();
}

} // namespace

ScenePreset parse_scene_preset(std::string_view name) {
    if (name == "cluster") return ScenePreset::Cluster;
    if (name == "plane") return ScenePreset::Plane;
    if (name == "shell") return ScenePreset::Shell;
    throw Error(ErrorCode::InvalidArgument, "unknown scene preset '" + std::string(name) + "'");
}

std::string_view to_string(ScenePreset preset) {
    switch (preset) {
    case ScenePreset::Cluster: return "cluster";
    case ScenePreset::Plane: return "plane";
    case ScenePreset::Shell: return "shell";
    }
    return "cluster";
}

SyntheticScene make_scene(const SceneOptions& options) {
    if (options.n_gaussians < 1 || options.n_views < 2 || options.width < 1 || options.height < 1) {
        throw Error(ErrorCode::InvalidArgument, "make_scene needs n_gaussians >= 1, n_views >= 2 and a positive size");
    }
    std::mt19937_64 rng(options.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    SyntheticScene scene;
    scene.preset = options.preset;
    scene.gt_field = GaussianField(options.sh_degree);
    const double opacity_logit = logit(0.9);
    double radius = 0.0;
    for (int i = 0; i < options.n_gaussians; ++i) {
        Eigen::Vector3d pos;
        Eigen::Vector3d log_scale;
        Eigen::Vector4d rot = random_quaternion(rng);
        switch (options.preset) {
        case ScenePreset::Cluster: {
            // Uniform in the unit ball; a single Gaussian sits at the origin.
            Eigen::Vector3d dir(normal(rng), normal(rng), normal(rng));
            pos = dir.normalized() * std::cbrt(unit(rng));
            if (options.n_gaussians == 1) {
                pos.setZero();
            }
            for (int a = 0; a < 3; ++a) log_scale[a] = std::log(0.12 + 0.08 * unit(rng));
            break;
        }
        case ScenePreset::Plane: {
            pos = {2.0 * unit(rng) - 1.0, 2.0 * unit(rng) - 1.0, 0.0};
            log_scale = {std::log(0.15 + 0.1 * unit(rng)), std::log(0.15 + 0.1 * unit(rng)), std::log(0.02)};
            rot = {1.0, 0.0, 0.0, 0.0};
            break;
        }
        case ScenePreset::Shell: {
            Eigen::Vector3d dir(normal(rng), normal(rng), normal(rng));
            pos = dir.normalized();
            for (int a = 0; a < 3; ++a) log_scale[a] = std::log(0.14 + 0.06 * unit(rng));
            break;
        }
        }
        std::vector<double> sh(scene.gt_field.sh_stride(), 0.0);
        Eigen::Vector3d color;
        for (int c = 0; c < 3; ++c) {
            color[c] = 0.1 + 0.8 * unit(rng);
            sh[static_cast<std::size_t>(c)] = (color[c] - 0.5) / kShC0;
        }
        scene.gt_field.append(pos, rot, log_scale, opacity_logit, sh);
        scene.surface_samples.push_back({pos, color, {}});
        radius = std::max(radius, pos.norm());
    }
    scene.diameter = 2.0 * std::max(radius, 1e-3);

    const int n_heldout = options.n_heldout < 0 ? options.n_views : options.n_heldout;
    scene.views = make_views(options, options.n_views, 0, false);
    scene.heldout = make_views(options, n_heldout, options.n_views, true);

    const auto render_into = [&](std::vector<CameraView>& views, const std::string& prefix, bool visibility) {
        for (auto& view : views) {
            const RenderOutput out = render(scene.gt_field, view, scene.background);
            view.image = out.color_image();
            quantize_8bit(view.image);
            char name[64];
            std::snprintf(name, sizeof(name), "%s/view_%03d.png", prefix.c_str(), view.view_id);
            view.image_path = name;
            if (!visibility) {
                continue;
            }
            for (auto& sample : scene.surface_samples) {
                const Eigen::Vector3d cam = view.to_camera(sample.point);
                if (cam.z() > kNearPlane && in_image(view, project_camera_point(cam, view))) {
                    sample.visible_views.push_back(view.view_id);
                }
            }
        }
    };
    render_into(scene.views, "images", true);
    render_into(scene.heldout, "images", false);
    return scene;
}

CorrespondenceSet generate_matches(const SyntheticScene& scene, int n_matches, double pixel_noise_std,
                                   std::uint64_t seed) {
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < scene.surface_samples.size(); ++i) {
        if (scene.surface_samples[i].visible_views.size() >= 2) {
            candidates.push_back(i);
        }
    }
    if (candidates.empty()) {
        throw Error(ErrorCode::InsufficientVisibility, "no surface sample is visible in two views");
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    CorrespondenceSet matches;
    for (int n = 0; n < n_matches; ++n) {
        const auto& sample = scene.surface_samples[candidates[std::uniform_int_distribution<std::size_t>(
            0, candidates.size() - 1)(rng)]];
        const auto& vis = sample.visible_views;
        const std::size_t a = std::uniform_int_distribution<std::size_t>(0, vis.size() - 1)(rng);
        std::size_t b = std::uniform_int_distribution<std::size_t>(0, vis.size() - 2)(rng);
        if (b >= a) {
            ++b;
        }
        Correspondence m;
        m.view_s = vis[a];
        m.view_t = vis[b];
        const CameraView& vs = find_view(scene.views, m.view_s);
        const CameraView& vt = find_view(scene.views, m.view_t);
        m.pixel_s = project_point(sample.point, vs).pixel;
        m.pixel_t = project_point(sample.point, vt).pixel;
        const double ns[4] = {noise(rng), noise(rng), noise(rng), noise(rng)};
        if (pixel_noise_std > 0.0) {
            m.pixel_s += pixel_noise_std * Eigen::Vector2d(ns[0], ns[1]);
            m.pixel_t += pixel_noise_std * Eigen::Vector2d(ns[2], ns[3]);
            m.pixel_s.x() = std::clamp(m.pixel_s.x(), 0.0, vs.width - 1.0);
            m.pixel_s.y() = std::clamp(m.pixel_s.y(), 0.0, vs.height - 1.0);
            m.pixel_t.x() = std::clamp(m.pixel_t.x(), 0.0, vt.width - 1.0);
            m.pixel_t.y() = std::clamp(m.pixel_t.y(), 0.0, vt.height - 1.0);
        }
        m.confidence = 1.0;
        matches.push_back(m);
    }
    return matches;
}

void write_dataset(const std::filesystem::path& dir, const SyntheticScene& scene, const CorrespondenceSet& matches) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "heldout" / "images");
    for (const auto& view : scene.views) {
        write_png_rgb8(dir / view.image_path, view.image);
    }
    for (const auto& view : scene.heldout) {
        write_png_rgb8(dir / "heldout" / view.image_path, view.image);
    }
    save_cameras(dir / "cameras.json", scene.views);
    save_cameras(dir / "heldout" / "cameras.json", scene.heldout);
    write_matches(dir / "matches.txt", matches);
    write_field_ply(dir / "gt.ply", scene.gt_field);
}

} // namespace sparsesplat
