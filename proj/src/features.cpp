#include "sparsesplat/features.hpp"

#include "sparsesplat/error.hpp"
#include "sparsesplat/parallel.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

namespace sparsesplat {

namespace {

constexpr int kBaseChannels = 6; // centered rgb + per-channel gradient magnitude
constexpr std::uint32_t kFeatureFileVersion = 1;

void check_level_dims(std::span<const int> level_dims) {
    if (level_dims.empty()) {
        throw Error(ErrorCode::InvalidArgument, "level_dims must not be empty");
    }
    for (int k : level_dims) {
        if (k < 1) {
            throw Error(ErrorCode::InvalidArgument, "every level needs at least one dimension");
        }
    }
}

} // namespace

int FeatureStack::total_dims() const { return std::accumulate(level_dims.begin(), level_dims.end(), 0); }

const FeatureMap& FeatureStack::for_view(int view_id) const {
    for (const auto& map : maps) {
        if (map.view_id == view_id) {
            return map;
        }
    }
    throw Error(ErrorCode::FeatureViewMismatch, "no feature map for view " + std::to_string(view_id));
}

void FeatureStack::validate() const {
    check_level_dims(level_dims);
    const int k = total_dims();
    for (const auto& map : maps) {
        if (map.dims != k ||
            map.data.size() != static_cast<std::size_t>(k) * static_cast<std::size_t>(map.height) * map.width) {
            throw Error(ErrorCode::FeatureViewMismatch,
                        "feature map for view " + std::to_string(map.view_id) + " disagrees with the level layout");
        }
    }
}

FeatureMap pyramid_features(const Image& image, std::span<const int> level_dims) {
    if (image.empty() || image.width < 1 || image.height < 1) {
        throw Error(ErrorCode::EmptyImage, "cannot extract features from an empty image");
    }
    check_level_dims(level_dims);
    const int w = image.width;
    const int h = image.height;
    const int channels = image.channels;

    std::vector<double> mean(static_cast<std::size_t>(channels), 0.0);
    for (std::size_t p = 0; p < image.pixel_count(); ++p) {
        for (int c = 0; c < channels; ++c) {
            mean[static_cast<std::size_t>(c)] += image.data[p * channels + static_cast<std::size_t>(c)];
        }
    }
    for (double& m : mean) {
        m /= static_cast<double>(image.pixel_count());
    }

    FeatureMap map;
    map.dims = std::accumulate(level_dims.begin(), level_dims.end(), 0);
    map.width = w;
    map.height = h;
    map.data.assign(static_cast<std::size_t>(map.dims) * image.pixel_count(), 0.0f);

    int channel_offset = 0;
    for (std::size_t level = 0; level < level_dims.size(); ++level) {
        const int factor = 1 << level;
        const double sigma = static_cast<double>(factor);
        const Image blurred = filter_separable(image, gaussian_kernel(sigma, static_cast<int>(std::ceil(3.0 * sigma))));

        const int cw = std::max(1, (w + factor - 1) / factor);
        const int ch = std::max(1, (h + factor - 1) / factor);
        Image coarse(cw, ch, channels);
        for (int y = 0; y < ch; ++y) {
            for (int x = 0; x < cw; ++x) {
                for (int c = 0; c < channels; ++c) {
                    coarse.at(x, y, c) = blurred.at(std::min(w - 1, x * factor), std::min(h - 1, y * factor), c);
                }
            }
        }
        Image base(cw, ch, kBaseChannels);
        for (int y = 0; y < ch; ++y) {
            for (int x = 0; x < cw; ++x) {
                for (int c = 0; c < std::min(3, channels); ++c) {
                    const double gx =
                        0.5 * (coarse.at(std::min(cw - 1, x + 1), y, c) - coarse.at(std::max(0, x - 1), y, c));
                    const double gy =
                        0.5 * (coarse.at(x, std::min(ch - 1, y + 1), c) - coarse.at(x, std::max(0, y - 1), c));
                    base.at(x, y, c) = coarse.at(x, y, c) - mean[static_cast<std::size_t>(c)];
                    base.at(x, y, 3 + c) = std::sqrt(gx * gx + gy * gy);
                }
            }
        }

        const int dims = level_dims[level];
        std::vector<double> sample(kBaseChannels);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                sample_bilinear(base, static_cast<double>(x) / factor, static_cast<double>(y) / factor,
                                sample.data());
                double norm2 = 0.0;
                for (int k = 0; k < dims; ++k) {
                    const double v = sample[static_cast<std::size_t>(k % kBaseChannels)];
                    norm2 += v * v;
                }
                const double inv = norm2 > 1e-24 ? 1.0 / std::sqrt(norm2) : 0.0;
                for (int k = 0; k < dims; ++k) {
                    const std::size_t idx =
                        (static_cast<std::size_t>(channel_offset + k) * h + static_cast<std::size_t>(y)) * w +
                        static_cast<std::size_t>(x);
                    map.data[idx] = static_cast<float>(sample[static_cast<std::size_t>(k % kBaseChannels)] * inv);
                }
            }
        }
        channel_offset += dims;
    }
    return map;
}

FeatureStack pyramid_feature_stack(const std::vector<CameraView>& views, std::span<const int> level_dims) {
    FeatureStack stack;
    stack.level_dims.assign(level_dims.begin(), level_dims.end());
    stack.maps.resize(views.size());
    parallel_for(views.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            stack.maps[i] = pyramid_features(views[i].image, level_dims);
            stack.maps[i].view_id = views[i].view_id;
        }
    });
    return stack;
}

bool query_feature(const FeatureMap& map, double u, double v, std::span<float> out) {
    if (!(u >= 0.0 && v >= 0.0 && u <= map.width - 1 && v <= map.height - 1)) {
        return false;
    }
    const int x0 = static_cast<int>(std::floor(u));
    const int y0 = static_cast<int>(std::floor(v));
    const int x1 = std::min(x0 + 1, map.width - 1);
    const int y1 = std::min(y0 + 1, map.height - 1);
    const double fx = u - x0;
    const double fy = v - y0;
    const double w00 = (1.0 - fx) * (1.0 - fy), w10 = fx * (1.0 - fy), w01 = (1.0 - fx) * fy, w11 = fx * fy;
    for (int k = 0; k < map.dims; ++k) {
        out[static_cast<std::size_t>(k)] = static_cast<float>(w00 * map.at(k, x0, y0) + w10 * map.at(k, x1, y0) +
                                                              w01 * map.at(k, x0, y1) + w11 * map.at(k, x1, y1));
    }
    return true;
}

std::optional<std::vector<float>> query_feature(const FeatureMap& map, double u, double v) {
    std::vector<float> out(static_cast<std::size_t>(map.dims));
    if (!query_feature(map, u, v, out)) {
        return std::nullopt;
    }
    return out;
}

std::vector<std::uint8_t> level_mask(int t, std::span<const int> level_dims) {
    if (t < 1) {
        throw Error(ErrorCode::InvalidStep, "pruning steps are 1-indexed");
    }
    const int levels = static_cast<int>(level_dims.size());
    const int total = std::accumulate(level_dims.begin(), level_dims.end(), 0);
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(total), 1);
    if (t >= levels) {
        return mask;
    }
    const int cut = std::accumulate(level_dims.begin(), level_dims.begin() + (levels - t), 0);
    // 1-indexed k is kept when k > cut, i.e. 0-indexed positions >= cut.
    std::fill(mask.begin(), mask.begin() + cut, 0);
    return mask;
}

double masked_similarity(std::span<const float> fm, std::span<const float> fn, std::span<const std::uint8_t> mask) {
    if (fm.size() != fn.size() || fm.size() != mask.size()) {
        throw Error(ErrorCode::ShapeMismatch, "feature vectors and mask must have equal length");
    }
    double dot = 0.0, nm = 0.0, nn = 0.0;
    for (std::size_t k = 0; k < mask.size(); ++k) {
        if (mask[k]) {
            dot += static_cast<double>(fm[k]) * fn[k];
            nm += static_cast<double>(fm[k]) * fm[k];
            nn += static_cast<double>(fn[k]) * fn[k];
        }
    }
    nm = std::sqrt(nm);
    nn = std::sqrt(nn);
    if (nm < 1e-12 || nn < 1e-12) {
        return 0.0;
    }
    return std::clamp(dot / (nm * nn), -1.0, 1.0);
}

std::size_t PruneDecision::pruned() const {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

PruneDecision compute_prune_mask(const GaussianField& field, const std::vector<CameraView>& views,
                                 const FeatureStack& features, int t, double tau, bool keep_pairwise) {
    const auto mhat = level_mask(t, features.level_dims);
    features.validate();
    std::vector<const FeatureMap*> maps;
    for (const auto& view : views) {
        const FeatureMap& map = features.for_view(view.view_id);
        if (map.width != view.width || map.height != view.height) {
            throw Error(ErrorCode::FeatureViewMismatch,
                        "feature map size differs from view " + std::to_string(view.view_id));
        }
        maps.push_back(&map);
    }
    const std::size_t m = field.size();
    const std::size_t n_views = views.size();
    const std::size_t dims = static_cast<std::size_t>(features.total_dims());

    PruneDecision decision;
    decision.mask.assign(m, 0);
    decision.valid_view_count.assign(m, 0);
    decision.pair_count = n_views * (n_views - (n_views > 0 ? 1 : 0)) / 2;
    if (keep_pairwise) {
        decision.pairwise_sims.assign(m * decision.pair_count, std::numeric_limits<double>::quiet_NaN());
    }

    parallel_for(m, [&](std::size_t begin, std::size_t end) {
        std::vector<float> queried(n_views * dims);
        std::vector<std::uint8_t> valid(n_views);
        for (std::size_t j = begin; j < end; ++j) {
            const Eigen::Vector3d mu = field.position(j);
            int n_valid = 0;
            for (std::size_t v = 0; v < n_views; ++v) {
                const Eigen::Vector3d cam = views[v].to_camera(mu);
                valid[v] = 0;
                if (!(cam.z() > kNearPlane)) {
                    continue;
                }
                const Eigen::Vector2d px = project_camera_point(cam, views[v]);
                if (query_feature(*maps[v], px.x(), px.y(), std::span<float>(queried.data() + v * dims, dims))) {
                    valid[v] = 1;
                    ++n_valid;
                }
            }
            decision.valid_view_count[j] = n_valid;
            if (n_valid < 2) {
                continue;
            }
            bool all_below = true;
            std::size_t pair = 0;
            for (std::size_t a = 0; a < n_views; ++a) {
                for (std::size_t b = a + 1; b < n_views; ++b, ++pair) {
                    if (!valid[a] || !valid[b]) {
                        continue;
                    }
                    const double s = masked_similarity(std::span<const float>(queried.data() + a * dims, dims),
                                                       std::span<const float>(queried.data() + b * dims, dims), mhat);
                    if (keep_pairwise) {
                        decision.pairwise_sims[j * decision.pair_count + pair] = s;
                    }
                    if (!(s < tau)) {
                        all_below = false;
                        if (!keep_pairwise) {
                            break;
                        }
                    }
                }
                if (!all_below && !keep_pairwise) {
                    break;
                }
            }
            decision.mask[j] = all_below ? 1 : 0;
        }
    });
    return decision;
}

GaussianField apply_prune(const GaussianField& field, const PruneDecision& decision) {
    if (decision.mask.size() != field.size()) {
        throw Error(ErrorCode::SizeMismatch, "prune mask length differs from field size");
    }
    std::vector<std::uint8_t> keep(decision.mask.size());
    for (std::size_t i = 0; i < keep.size(); ++i) {
        keep[i] = decision.mask[i] ? 0 : 1;
    }
    GaussianField out = field;
    out.compact(keep);
    return out;
}

namespace {

static_assert(std::endian::native == std::endian::little, "feature I/O assumes a little-endian host");

void put_u32(std::ofstream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof(v)); }

std::uint32_t get_u32(std::ifstream& in, const std::filesystem::path& path) {
    std::uint32_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(v))) {
        throw Error(ErrorCode::ParseError, path.string() + ": truncated feature file");
    }
    return v;
}

} // namespace

void write_feature_stack(const std::filesystem::path& path, const FeatureStack& stack) {
    stack.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorCode::IoError, "cannot write " + path.string());
    }
    out.write("MCFS", 4);
    put_u32(out, kFeatureFileVersion);
    put_u32(out, static_cast<std::uint32_t>(stack.maps.size()));
    put_u32(out, static_cast<std::uint32_t>(stack.level_dims.size()));
    for (int k : stack.level_dims) {
        put_u32(out, static_cast<std::uint32_t>(k));
    }
    for (const auto& map : stack.maps) {
        put_u32(out, static_cast<std::uint32_t>(map.view_id));
        put_u32(out, static_cast<std::uint32_t>(map.height));
        put_u32(out, static_cast<std::uint32_t>(map.width));
        out.write(reinterpret_cast<const char*>(map.data.data()),
                  static_cast<std::streamsize>(map.data.size() * sizeof(float)));
    }
    if (!out) {
        throw Error(ErrorCode::IoError, "failed writing " + path.string());
    }
}

FeatureStack read_feature_stack(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::IoError, "cannot open " + path.string());
    }
    char magic[4] = {};
    if (!in.read(magic, 4) || std::memcmp(magic, "MCFS", 4) != 0) {
        throw Error(ErrorCode::ParseError, path.string() + ": bad feature-stack magic");
    }
    if (get_u32(in, path) != kFeatureFileVersion) {
        throw Error(ErrorCode::ParseError, path.string() + ": unsupported feature-stack version");
    }
    const std::uint32_t n_views = get_u32(in, path);
    const std::uint32_t levels = get_u32(in, path);
    FeatureStack stack;
    for (std::uint32_t l = 0; l < levels; ++l) {
        stack.level_dims.push_back(static_cast<int>(get_u32(in, path)));
    }
    const int dims = stack.total_dims();
    for (std::uint32_t v = 0; v < n_views; ++v) {
        FeatureMap map;
        map.view_id = static_cast<int>(get_u32(in, path));
        map.height = static_cast<int>(get_u32(in, path));
        map.width = static_cast<int>(get_u32(in, path));
        map.dims = dims;
        map.data.resize(static_cast<std::size_t>(dims) * map.height * map.width);
        if (!in.read(reinterpret_cast<char*>(map.data.data()),
                     static_cast<std::streamsize>(map.data.size() * sizeof(float)))) {
            throw Error(ErrorCode::ParseError, path.string() + ": truncated feature data");
        }
        stack.maps.push_back(std::move(map));
    }
    stack.validate();
    return stack;
}

} // namespace sparsesplat
