#include "sparsesplat/initializer.hpp"

#include "sparsesplat/error.hpp"
#include "sparsesplat/parallel.hpp"
#include "sparsesplat/ply.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>
#include <tuple>

namespace sparsesplat {

std::size_t PointCloudSeed::count(PointSource kind) const {
    return static_cast<std::size_t>(std::count(source.begin(), source.end(), kind));
}

void PointCloudSeed::push_back(const Eigen::Vector3d& position, const Eigen::Vector3d& color, PointSource kind) {
    positions.push_back(position);
    colors.push_back(color);
    source.push_back(kind);
}

Midpoint triangulate_midpoint(const Ray& ray_s, const Ray& ray_t) {
    const Eigen::Vector3d& ds = ray_s.direction;
    const Eigen::Vector3d& dt = ray_t.direction;
    const double ss = ds.dot(ds);
    const double tt = dt.dot(dt);
    const double st = ds.dot(dt);
    const double sin2 = 1.0 - st * st / (ss * tt);
    if (!(sin2 >= 1e-8)) { // |sin θ| < 1e-4
        return {};
    }
    const Eigen::Vector3d w = ray_s.origin - ray_t.origin;
    const double sw = ds.dot(w);
    const double tw = dt.dot(w);
    const double denom = ss * tt - st * st;
    const double a = (st * tw - tt * sw) / denom;
    const double b = (ss * tw - st * sw) / denom;
    if (a < -1e-12 || b < -1e-12) {
        return {};
    }
    const Eigen::Vector3d xs = ray_s.origin + a * ds;
    const Eigen::Vector3d xt = ray_t.origin + b * dt;
    return {0.5 * (xs + xt), true};
}

PointCloudSeed build_seed_cloud(const CorrespondenceSet& matches, const std::vector<CameraView>& views) {
    std::vector<const CameraView*> lookup;
    for (const auto& m : matches) {
        lookup.push_back(&find_view(views, m.view_s));
        lookup.push_back(&find_view(views, m.view_t));
    }
    std::vector<Midpoint> points(matches.size());
    std::vector<Eigen::Vector3d> colors(matches.size(), Eigen::Vector3d::Zero());
    parallel_for(matches.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const auto& m = matches[i];
            const CameraView& vs = *lookup[2 * i];
            const CameraView& vt = *lookup[2 * i + 1];
            const auto inside = [](const CameraView& v, const Eigen::Vector2d& px) {
                return px.x() >= 0.0 && px.x() < v.width && px.y() >= 0.0 && px.y() < v.height;
            };
            if (!inside(vs, m.pixel_s) || !inside(vt, m.pixel_t)) {
                continue;
            }
            points[i] = triangulate_midpoint(pixel_ray(vs, m.pixel_s), pixel_ray(vt, m.pixel_t));
            if (!points[i].valid) {
                continue;
            }
            Eigen::Vector3d cs = Eigen::Vector3d::Constant(0.5);
            Eigen::Vector3d ct = Eigen::Vector3d::Constant(0.5);
            if (!vs.image.empty()) {
                sample_bilinear(vs.image, m.pixel_s.x(), m.pixel_s.y(), cs.data());
            }
            if (!vt.image.empty()) {
                sample_bilinear(vt.image, m.pixel_t.x(), m.pixel_t.y(), ct.data());
            }
            colors[i] = 0.5 * (cs + ct);
        }
    });
    PointCloudSeed cloud;
    for (std::size_t i = 0; i < matches.size(); ++i) {
        if (points[i].valid) {
            cloud.push_back(points[i].point, colors[i], PointSource::Matched);
        }
    }
    return cloud;
}

PointCloudSeed filter_outliers(const PointCloudSeed& cloud, int k, double std_ratio) {
    if (k < 1 || !(std_ratio > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "filter_outliers needs k >= 1 and std_ratio > 0");
    }
    std::vector<std::size_t> matched;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        if (cloud.source[i] == PointSource::Matched) {
            matched.push_back(i);
        }
    }
    const std::size_t kk = static_cast<std::size_t>(k);
    if (matched.size() <= kk) {
        return cloud;
    }
    std::vector<double> stat(matched.size());
    parallel_for(matched.size(), [&](std::size_t begin, std::size_t end) {
        std::vector<double> dists(matched.size() - 1);
        for (std::size_t a = begin; a < end; ++a) {
            std::size_t n = 0;
            for (std::size_t b = 0; b < matched.size(); ++b) {
                if (b != a) {
                    dists[n++] = (cloud.positions[matched[a]] - cloud.positions[matched[b]]).norm();
                }
            }
            std::nth_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(kk - 1), dists.end());
            double sum = 0.0;
            for (std::size_t j = 0; j < kk; ++j) {
                sum += dists[j];
            }
            stat[a] = sum / static_cast<double>(kk);
        }
    });
    double mean = 0.0;
    for (double s : stat) {
        mean += s;
    }
    mean /= static_cast<double>(stat.size());
    double var = 0.0;
    for (double s : stat) {
        var += (s - mean) * (s - mean);
    }
    const double threshold = mean + std_ratio * std::sqrt(var / static_cast<double>(stat.size()));

    std::vector<bool> drop(cloud.size(), false);
    for (std::size_t a = 0; a < matched.size(); ++a) {
        drop[matched[a]] = stat[a] > threshold;
    }
    PointCloudSeed out;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        if (!drop[i]) {
            out.push_back(cloud.positions[i], cloud.colors[i], cloud.source[i]);
        }
    }
    return out;
}

std::optional<BoundingBox> matched_bounds(const PointCloudSeed& cloud, double dilation) {
    std::optional<BoundingBox> box;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        if (cloud.source[i] != PointSource::Matched) {
            continue;
        }
        if (!box) {
            box = BoundingBox{cloud.positions[i], cloud.positions[i]};
        } else {
            box->min = box->min.cwiseMin(cloud.positions[i]);
            box->max = box->max.cwiseMax(cloud.positions[i]);
        }
    }
    if (box) {
        const Eigen::Vector3d extent = box->max - box->min;
        const double fallback = std::max(dilation * extent.maxCoeff(), 1e-3);
        for (int a = 0; a < 3; ++a) {
            const double pad = extent[a] > 0.0 ? dilation * extent[a] : fallback;
            box->min[a] -= pad;
            box->max[a] += pad;
        }
    }
    return box;
}

BoundingBox camera_bounds(const std::vector<CameraView>& views) {
    if (views.empty()) {
        throw Error(ErrorCode::InvalidArgument, "camera_bounds needs at least one view");
    }
    Eigen::Matrix3d a = Eigen::Matrix3d::Zero();
    Eigen::Vector3d b = Eigen::Vector3d::Zero();
    Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
    Eigen::Vector3d mean_forward = Eigen::Vector3d::Zero();
    for (const auto& view : views) {
        const Eigen::Vector3d o = view.center();
        const Eigen::Vector3d d = view.rotation.row(2).transpose();
        const Eigen::Matrix3d proj = Eigen::Matrix3d::Identity() - d * d.transpose();
        a += proj;
        b += proj * o;
        centroid += o;
        mean_forward += d;
    }
    centroid /= static_cast<double>(views.size());
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(a);
    Eigen::Vector3d focus;
    if (eig.eigenvalues().minCoeff() > 1e-6 * a.trace()) {
        focus = a.ldlt().solve(b);
    } else {
        focus = centroid + mean_forward.normalized();
    }
    double mean_dist = 0.0;
    for (const auto& view : views) {
        mean_dist += (view.center() - focus).norm();
    }
    mean_dist /= static_cast<double>(views.size());
    const double half = std::max(0.5 * mean_dist, 1e-3);
    return {focus - Eigen::Vector3d::Constant(half), focus + Eigen::Vector3d::Constant(half)};
}

Eigen::Vector3i voxel_of(const Eigen::Vector3d& p, const BoundingBox& box, int resolution) {
    Eigen::Vector3i idx;
    for (int a = 0; a < 3; ++a) {
        const double voxel = (box.max[a] - box.min[a]) / resolution;
        const auto i = static_cast<long long>(std::floor((p[a] - box.min[a]) / voxel));
        idx[a] = static_cast<int>(std::clamp<long long>(i, 0, resolution - 1));
    }
    return idx;
}

PointCloudSeed random_fill(const PointCloudSeed& cloud, const BoundingBox& box, int n_fill, int resolution,
                           std::uint64_t rng_seed) {
    for (int a = 0; a < 3; ++a) {
        if (!(box.max[a] - box.min[a] > 0.0)) {
            throw Error(ErrorCode::DegenerateBox, "bounding box has a non-positive extent");
        }
    }
    if (resolution < 1 || n_fill < 0) {
        throw Error(ErrorCode::InvalidArgument, "random_fill needs resolution >= 1 and n_fill >= 0");
    }
    std::set<std::tuple<int, int, int>> occupied;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        if (cloud.source[i] == PointSource::Matched) {
            const Eigen::Vector3i v = voxel_of(cloud.positions[i], box, resolution);
            occupied.emplace(v.x(), v.y(), v.z());
        }
    }
    PointCloudSeed out = cloud;
    std::mt19937_64 rng(rng_seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int n = 0; n < n_fill; ++n) {
        Eigen::Vector3d p;
        Eigen::Vector3d color;
        for (int a = 0; a < 3; ++a) {
            p[a] = box.min[a] + unit(rng) * (box.max[a] - box.min[a]);
        }
        for (int c = 0; c < 3; ++c) {
            color[c] = unit(rng);
        }
        const Eigen::Vector3i v = voxel_of(p, box, resolution);
        if (!occupied.contains({v.x(), v.y(), v.z()})) {
            out.push_back(p, color, PointSource::Filled);
        }
    }
    return out;
}

int default_fill_count(std::size_t n_views) {
    return static_cast<int>(std::min<std::size_t>(10 * n_views * 100, 5000));
}

CorrespondenceSet read_matches(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::IoError, "cannot open " + path.string());
    }
    CorrespondenceSet matches;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        std::istringstream ls(line);
        Correspondence m;
        if (!(ls >> m.view_s)) {
            continue; // blank or comment-only
        }
        if (!(ls >> m.view_t >> m.pixel_s.x() >> m.pixel_s.y() >> m.pixel_t.x() >> m.pixel_t.y() >> m.confidence)) {
            throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(line_no) + ": expected 7 fields");
        }
        if (m.view_s == m.view_t) {
            throw Error(ErrorCode::ParseError,
                        path.string() + ":" + std::to_string(line_no) + ": a match must join two distinct views");
        }
        matches.push_back(m);
    }
    return matches;
}

void write_matches(const std::filesystem::path& path, const CorrespondenceSet& matches) {
    std::ofstream out(path);
    if (!out) {
        throw Error(ErrorCode::IoError, "cannot write " + path.string());
    }
    out << "# view_s view_t u_s v_s u_t v_t confidence\n" << std::setprecision(17);
    for (const auto& m : matches) {
        out << m.view_s << ' ' << m.view_t << ' ' << m.pixel_s.x() << ' ' << m.pixel_s.y() << ' ' << m.pixel_t.x()
            << ' ' << m.pixel_t.y() << ' ' << m.confidence << '\n';
    }
}

void write_seed_ply(const std::filesystem::path& path, const PointCloudSeed& cloud) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorCode::IoError, "cannot write " + path.string());
    }
    out << "ply\nformat binary_little_endian 1.0\nelement vertex " << cloud.size() << '\n'
        << "property float x\nproperty float y\nproperty float z\n"
        << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
        << "property uchar source\nend_header\n";
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        float xyz[3];
        unsigned char rgbs[4];
        for (int a = 0; a < 3; ++a) {
            xyz[a] = static_cast<float>(cloud.positions[i][a]);
            rgbs[a] = static_cast<unsigned char>(std::lround(std::clamp(cloud.colors[i][a], 0.0, 1.0) * 255.0));
        }
        rgbs[3] = static_cast<unsigned char>(cloud.source[i]);
        out.write(reinterpret_cast<const char*>(xyz), sizeof(xyz));
        out.write(reinterpret_cast<const char*>(rgbs), sizeof(rgbs));
    }
    if (!out) {
        throw Error(ErrorCode::IoError, "failed writing " + path.string());
    }
}

PointCloudSeed read_seed_ply(const std::filesystem::path& path) {
    const PlyVertices ply = read_ply_vertices(path);
    const auto& x = ply.column("x");
    const auto& y = ply.column("y");
    const auto& z = ply.column("z");
    const bool has_color = ply.has("red") && ply.has("green") && ply.has("blue");
    PointCloudSeed cloud;
    for (std::size_t i = 0; i < ply.count; ++i) {
        Eigen::Vector3d color = Eigen::Vector3d::Constant(0.5);
        if (has_color) {
            color = Eigen::Vector3d(ply.column("red")[i], ply.column("green")[i], ply.column("blue")[i]) / 255.0;
        }
        const auto kind = ply.has("source") && ply.column("source")[i] != 0.0 ? PointSource::Filled
                                                                              : PointSource::Matched;
        cloud.push_back({x[i], y[i], z[i]}, color, kind);
    }
    return cloud;
}

} // namespace sparsesplat
