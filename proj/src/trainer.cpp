#include "sparsesplat/trainer.hpp"

#include "sparsesplat/error.hpp"
#include "sparsesplat/parallel.hpp"
#include "sparsesplat/ply.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace sparsesplat {

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
    const std::string s = trim(text);
    T value{};
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
        throw Error(ErrorCode::ParseError, "bad value '" + s + "' for " + std::string(key));
    }
    return value;
}

template <typename T>
std::vector<T> parse_list(std::string_view key, std::string_view text) {
    std::vector<T> out;
    std::string s(text);
    std::replace(s.begin(), s.end(), '[', ' ');
    std::replace(s.begin(), s.end(), ']', ' ');
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!trim(item).empty()) {
            out.push_back(parse_number<T>(key, item));
        }
    }
    return out;
}

bool parse_bool(std::string_view key, std::string_view text) {
    const std::string s = trim(text);
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw Error(ErrorCode::ParseError, "bad boolean '" + s + "' for " + std::string(key));
}

std::size_t group_stride(const GaussianField& field, std::size_t group) {
    switch (group) {
    case kGroupPosition: return 3;
    case kGroupRotation: return 4;
    case kGroupScale: return 3;
    case kGroupOpacity: return 1;
    default: return field.sh_stride();
    }
}

std::vector<double>& group_params(GaussianField& field, std::size_t group) {
    switch (group) {
    case kGroupPosition: return field.positions;
    case kGroupRotation: return field.rotations;
    case kGroupScale: return field.log_scales;
    case kGroupOpacity: return field.opacity_logits;
    default: return field.sh;
    }
}

const std::vector<double>& group_grads(const SplatGradients& g, std::size_t group) {
    switch (group) {
    case kGroupPosition: return g.d_positions;
    case kGroupRotation: return g.d_rotations;
    case kGroupScale: return g.d_log_scales;
    case kGroupOpacity: return g.d_opacity_logits;
    default: return g.d_sh;
    }
}

double group_lr(const TrainConfig& config, std::size_t group, long iter, double extent) {
    switch (group) {
    case kGroupPosition: return position_lr(iter, config) * extent;
    case kGroupRotation: return config.rotation_lr;
    case kGroupScale: return config.scale_lr;
    case kGroupOpacity: return config.opacity_lr;
    default: return config.sh_lr;
    }
}

double max_scale(const GaussianField& field, std::size_t i) {
    return std::exp(std::max({field.log_scales[3 * i], field.log_scales[3 * i + 1], field.log_scales[3 * i + 2]}));
}

void log_event(TrainState& state, EventKind kind, std::size_t before, int t = 0, double tau = 0.0) {
    state.events.push_back({state.iter, kind, t, tau, before, state.field.size()});
}

const CameraView& next_view(TrainState& state, const std::vector<CameraView>& views) {
    if (state.view_order.size() != views.size() || state.view_cursor >= state.view_order.size()) {
        state.view_order.resize(views.size());
        std::iota(state.view_order.begin(), state.view_order.end(), std::size_t{0});
        std::shuffle(state.view_order.begin(), state.view_order.end(), state.rng);
        state.view_cursor = 0;
    }
    return views[state.view_order[state.view_cursor++]];
}

} // namespace

TrainPreset parse_train_preset(std::string_view name) {
    if (name == "forward_facing") return TrainPreset::ForwardFacing;
    if (name == "panoramic") return TrainPreset::Panoramic;
    throw Error(ErrorCode::InvalidConfig, "unknown preset '" + std::string(name) + "'");
}

std::string_view to_string(TrainPreset preset) {
    return preset == TrainPreset::Panoramic ? "panoramic" : "forward_facing";
}

std::string_view to_string(EventKind kind) {
    switch (kind) {
    case EventKind::Densify: return "densify";
    case EventKind::OpacityReset: return "opacity_reset";
    case EventKind::MvcPrune: return "mvc_prune";
    case EventKind::EadrEnabled: return "eadr_enabled";
    }
    return "densify";
}

TrainConfig TrainConfig::for_preset(TrainPreset preset) {
    TrainConfig config;
    config.preset = preset;
    if (preset == TrainPreset::Panoramic) {
        config.prune_steps_total = 4;
        config.prune_i_step = 2500;
        config.tau_schedule = {0.6, 0.65, 0.7, 0.8};
    }
    return config;
}

void TrainConfig::set(std::string_view key, std::string_view value) {
    if (key == "preset") {
        const bool mvc = mvc_prune;
        const bool depth_reg = eadr;
        *this = for_preset(parse_train_preset(trim(value)));
        mvc_prune = mvc;
        eadr = depth_reg;
    } else if (key == "total_iters") {
        total_iters = parse_number<long>(key, value);
    } else if (key == "position_lr_init") {
        position_lr_init = parse_number<double>(key, value);
    } else if (key == "position_lr_final") {
        position_lr_final = parse_number<double>(key, value);
    } else if (key == "rotation_lr") {
        rotation_lr = parse_number<double>(key, value);
    } else if (key == "scale_lr") {
        scale_lr = parse_number<double>(key, value);
    } else if (key == "opacity_lr") {
        opacity_lr = parse_number<double>(key, value);
    } else if (key == "sh_lr") {
        sh_lr = parse_number<double>(key, value);
    } else if (key == "densify_interval") {
        densify_interval = parse_number<long>(key, value);
    } else if (key == "opacity_reset_interval") {
        opacity_reset_interval = parse_number<long>(key, value);
    } else if (key == "densify_grad_threshold") {
        densify_grad_threshold = parse_number<double>(key, value);
    } else if (key == "densify_until_iter") {
        densify_until_iter = parse_number<long>(key, value);
    } else if (key == "percent_dense") {
        percent_dense = parse_number<double>(key, value);
    } else if (key == "min_opacity") {
        min_opacity = parse_number<double>(key, value);
    } else if (key == "max_scale_fraction") {
        max_scale_fraction = parse_number<double>(key, value);
    } else if (key == "prune_steps_total") {
        prune_steps_total = parse_number<int>(key, value);
    } else if (key == "prune_i_step") {
        prune_i_step = parse_number<long>(key, value);
    } else if (key == "tau_schedule") {
        tau_schedule = parse_list<double>(key, value);
    } else if (key == "level_dims") {
        level_dims = parse_list<int>(key, value);
    } else if (key == "lambda_dssim") {
        lambda_dssim = parse_number<double>(key, value);
    } else if (key == "eadr_beta") {
        eadr_beta = parse_number<double>(key, value);
    } else if (key == "eadr_depth_scale") {
        eadr_depth_scale = parse_number<double>(key, value);
    } else if (key == "sh_degree") {
        sh_degree = parse_number<int>(key, value);
    } else if (key == "background") {
        const auto rgb = parse_list<double>(key, value);
        if (rgb.size() != 3) {
            throw Error(ErrorCode::ParseError, "background needs 3 values");
        }
        background = {rgb[0], rgb[1], rgb[2]};
    } else if (key == "rng_seed") {
        rng_seed = parse_number<std::uint64_t>(key, value);
    } else if (key == "mvc_prune") {
        mvc_prune = parse_bool(key, value);
    } else if (key == "eadr") {
        eadr = parse_bool(key, value);
    } else {
        throw Error(ErrorCode::InvalidConfig, "unknown config key '" + std::string(key) + "'");
    }
}

void TrainConfig::validate() const {
    const auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); };
    if (total_iters < 0) fail("total_iters must be >= 0");
    if (prune_steps_total < 1) fail("prune_steps_total must be >= 1");
    if (tau_schedule.size() != static_cast<std::size_t>(prune_steps_total)) {
        fail("tau_schedule has " + std::to_string(tau_schedule.size()) + " entries, expected " +
             std::to_string(prune_steps_total));
    }
    if (densify_interval < 1 || opacity_reset_interval < 1 || prune_i_step < 1) fail("intervals must be >= 1");
    for (double lr : {position_lr_init, position_lr_final, rotation_lr, scale_lr, opacity_lr, sh_lr}) {
        if (!(lr >= 0.0)) fail("learning rates must be >= 0");
    }
    if ((position_lr_init > 0.0) != (position_lr_final > 0.0)) {
        fail("position_lr_init and position_lr_final must both be positive or both zero");
    }
    if (level_dims.empty() || std::any_of(level_dims.begin(), level_dims.end(), [](int k) { return k < 1; })) {
        fail("level_dims must be a non-empty list of positive sizes");
    }
    if (sh_degree < 0 || sh_degree > kMaxShDegree) fail("sh_degree must be in [0, 3]");
    if (lambda_dssim < 0.0 || lambda_dssim > 1.0) fail("lambda_dssim must be in [0, 1]");
    if (!(eadr_depth_scale > 0.0)) fail("eadr_depth_scale must be positive");
    if (!(percent_dense > 0.0) || !(split_scale_divisor > 0.0)) fail("densification factors must be positive");
}

TrainConfig load_config_file(const std::filesystem::path& path, TrainConfig config) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::IoError, "cannot open config " + path.string());
    }
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.resize(hash);
        }
        if (trim(line).empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(line_no) + ": expected key = value");
        }
        config.set(trim(std::string_view(line).substr(0, eq)), std::string_view(line).substr(eq + 1));
    }
    return config;
}

void OptimizerState::resize_like(const GaussianField& field) {
    for (std::size_t g = 0; g < kGroupCount; ++g) {
        const std::size_t n = field.size() * group_stride(field, g);
        groups[g].m.resize(n, 0.0);
        groups[g].v.resize(n, 0.0);
    }
}

void OptimizerState::compact(const GaussianField& field_before, std::span<const std::uint8_t> keep) {
    for (std::size_t g = 0; g < kGroupCount; ++g) {
        compact_rows(groups[g].m, group_stride(field_before, g), keep);
        compact_rows(groups[g].v, group_stride(field_before, g), keep);
    }
}

bool OptimizerState::consistent_with(const GaussianField& field) const {
    for (std::size_t g = 0; g < kGroupCount; ++g) {
        const std::size_t n = field.size() * group_stride(field, g);
        if (groups[g].m.size() != n || groups[g].v.size() != n) {
            return false;
        }
    }
    return true;
}

double scene_extent(const std::vector<CameraView>& views) {
    if (views.empty()) {
        return 1.0;
    }
    Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
    for (const auto& v : views) {
        centroid += v.center();
    }
    centroid /= static_cast<double>(views.size());
    double radius = 0.0;
    for (const auto& v : views) {
        radius = std::max(radius, (v.center() - centroid).norm());
    }
    return 1.1 * (radius > 0.0 ? radius : 1.0);
}

GaussianField field_from_seed(const PointCloudSeed& seed, int sh_degree) {
    const std::size_t n = seed.size();
    std::vector<double> mean_dist(n, 0.0);
    parallel_for(n, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            std::array<double, 3> best{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
                                       std::numeric_limits<double>::infinity()};
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) {
                    continue;
                }
                const double d2 = (seed.positions[i] - seed.positions[j]).squaredNorm();
                if (d2 < best[2]) {
                    best[2] = d2;
                    std::sort(best.begin(), best.end());
                }
            }
            double sum = 0.0;
            int count = 0;
            for (double d2 : best) {
                if (std::isfinite(d2)) {
                    sum += std::sqrt(std::max(d2, 1e-7));
                    ++count;
                }
            }
            mean_dist[i] = count > 0 ? sum / count : 0.01;
        }
    });

    GaussianField field(sh_degree);
    std::vector<double> sh(field.sh_stride(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (int c = 0; c < 3; ++c) {
            sh[static_cast<std::size_t>(c)] = (seed.colors[i][c] - 0.5) / kShC0;
        }
        const double log_s = std::log(mean_dist[i]);
        field.append(seed.positions[i], {1.0, 0.0, 0.0, 0.0}, {log_s, log_s, log_s}, logit(0.1), sh);
    }
    return field;
}

TrainState init_state(const PointCloudSeed& seed, const std::vector<CameraView>& views, const TrainConfig& config) {
    if (seed.size() == 0) {
        throw Error(ErrorCode::EmptyField, "seed point cloud is empty");
    }
    TrainState state;
    state.field = field_from_seed(seed, config.sh_degree);
    state.scene_extent = scene_extent(views);
    state.rng.seed(config.rng_seed);
    state.optimizer.resize_like(state.field);
    return state;
}

double position_lr(long iter, const TrainConfig& config) {
    if (config.position_lr_init <= 0.0 || config.position_lr_final <= 0.0) {
        return 0.0;
    }
    const double t = config.total_iters > 0
                         ? std::clamp(static_cast<double>(iter) / static_cast<double>(config.total_iters), 0.0, 1.0)
                         : 1.0;
    return std::exp((1.0 - t) * std::log(config.position_lr_init) + t * std::log(config.position_lr_final));
}

void remove_primitives(TrainState& state, std::span<const std::uint8_t> remove) {
    if (remove.size() != state.field.size()) {
        throw Error(ErrorCode::SizeMismatch, "removal mask length differs from field size");
    }
    std::vector<std::uint8_t> keep(remove.size());
    for (std::size_t i = 0; i < remove.size(); ++i) {
        keep[i] = remove[i] ? 0 : 1;
    }
    state.optimizer.compact(state.field, keep);
    state.field.compact(keep);
}

void densify_and_prune_base(TrainState& state, const TrainConfig& config) {
    GaussianField& f = state.field;
    const std::size_t m = f.size();
    const double boundary = config.percent_dense * state.scene_extent;
    std::vector<std::uint8_t> clone(m, 0);
    std::vector<std::uint8_t> split(m, 0);
    for (std::size_t i = 0; i < m; ++i) {
        const double grad = f.grad_count[i] > 0 ? f.grad_accum[i] / f.grad_count[i] : 0.0;
        if (grad >= config.densify_grad_threshold) {
            (max_scale(f, i) <= boundary ? clone : split)[i] = 1;
        }
    }

    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> sh(f.sh_stride());
    for (std::size_t i = 0; i < m; ++i) {
        if (!clone[i] && !split[i]) {
            continue;
        }
        const auto src = f.sh_of(i);
        std::copy(src.begin(), src.end(), sh.begin());
        const Eigen::Vector3d mu = f.position(i);
        const Eigen::Vector4d q = f.rotation(i);
        const Eigen::Vector3d log_s(f.log_scales[3 * i], f.log_scales[3 * i + 1], f.log_scales[3 * i + 2]);
        const double opacity_logit = f.opacity_logits[i];
        if (clone[i]) {
            f.append(mu, q, log_s, opacity_logit, sh);
            continue;
        }
        const Eigen::Matrix3d r = quaternion_to_rotation(q.normalized());
        const Eigen::Vector3d s = log_s.array().exp();
        const Eigen::Vector3d child_log_s = (s / config.split_scale_divisor).array().log();
        for (int child = 0; child < 2; ++child) {
            const Eigen::Vector3d n(normal(state.rng), normal(state.rng), normal(state.rng));
            f.append(mu + r * s.cwiseProduct(n), q, child_log_s, opacity_logit, sh);
        }
    }
    state.optimizer.resize_like(f);

    std::vector<std::uint8_t> remove(f.size(), 0);
    const bool oversize = state.iter > config.opacity_reset_interval;
    for (std::size_t i = 0; i < f.size(); ++i) {
        if ((i < m && split[i]) || f.opacity(i) < config.min_opacity ||
            (oversize && max_scale(f, i) > config.max_scale_fraction * state.scene_extent)) {
            remove[i] = 1;
        }
    }
    remove_primitives(state, remove);
    std::fill(f.grad_accum.begin(), f.grad_accum.end(), 0.0);
    std::fill(f.grad_count.begin(), f.grad_count.end(), 0);
}

void reset_opacity(TrainState& state) {
    std::fill(state.field.opacity_logits.begin(), state.field.opacity_logits.end(), logit(0.01));
    auto& moments = state.optimizer.groups[kGroupOpacity];
    std::fill(moments.m.begin(), moments.m.end(), 0.0);
    std::fill(moments.v.begin(), moments.v.end(), 0.0);
}

std::size_t mvc_prune(TrainState& state, const std::vector<CameraView>& views, const FeatureStack& features, int t,
                      double tau) {
    const PruneDecision decision = compute_prune_mask(state.field, views, features, t, tau);
    remove_primitives(state, decision.mask);
    return decision.pruned();
}

LossBreakdown train_step(TrainState& state, const std::vector<CameraView>& views, const FeatureStack* features,
                         const TrainConfig& config) {
    if (state.field.empty()) {
        throw Error(ErrorCode::EmptyField, "no Gaussians left to optimize at iteration " + std::to_string(state.iter));
    }
    if (views.empty()) {
        throw Error(ErrorCode::InvalidArgument, "no training views");
    }
    if (config.mvc_prune && features == nullptr) {
        throw Error(ErrorCode::InvalidConfig, "MVC pruning needs a feature stack");
    }
    const long n = state.iter + 1;
    const CameraView& view = next_view(state, views);
    if (view.image.empty()) {
        throw Error(ErrorCode::EmptyImage, "view " + std::to_string(view.view_id) + " has no image");
    }

    const RenderOutput out = state.rasterizer.forward(state.field, view, config.background);
    LossBreakdown loss;
    Image g_color;
    loss.photometric = photometric_loss(out.color_image(), view.image, config.lambda_dssim, &g_color);
    std::vector<double> g_depth(out.depth.size(), 0.0);
    loss.eadr_weight = config.eadr ? eadr_weight(n, config.prune_steps_total, static_cast<int>(config.prune_i_step))
                                   : 0.0;
    if (loss.eadr_weight > 0.0) {
        Image depth = out.depth_image(true);
        for (double& d : depth.data) {
            d *= config.eadr_depth_scale;
        }
        Image g;
        loss.eadr = loss.eadr_weight * eadr_loss(depth, view.image, config.eadr_beta, &g);
        for (std::size_t p = 0; p < g_depth.size(); ++p) {
            g_depth[p] = loss.eadr_weight * config.eadr_depth_scale * g.data[p];
        }
    }
    loss.total = loss.photometric + loss.eadr;

    const SplatGradients grads =
        state.rasterizer.backward(state.field, view, config.background, g_color.data, g_depth);

    GaussianField& f = state.field;
    for (std::size_t i = 0; i < f.size(); ++i) {
        if (out.visible[i]) {
            f.grad_accum[i] += grads.d_mean2d_norm[i];
            f.grad_count[i] += 1;
        }
    }

    state.optimizer.step += 1;
    const double b1 = config.adam_beta1;
    const double b2 = config.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.optimizer.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.optimizer.step));
    for (std::size_t g = 0; g < kGroupCount; ++g) {
        const double lr = group_lr(config, g, state.iter, state.scene_extent);
        std::vector<double>& params = group_params(f, g);
        const std::vector<double>& grad = group_grads(grads, g);
        AdamMoments& mom = state.optimizer.groups[g];
        for (std::size_t k = 0; k < params.size(); ++k) {
            mom.m[k] = b1 * mom.m[k] + (1.0 - b1) * grad[k];
            mom.v[k] = b2 * mom.v[k] + (1.0 - b2) * grad[k] * grad[k];
            if (lr > 0.0) {
                params[k] -= lr * (mom.m[k] / c1) / (std::sqrt(mom.v[k] / c2) + config.adam_eps);
            }
        }
    }

    state.iter = n;
    const long last_reset_iter = static_cast<long>(config.prune_steps_total - 1) * config.prune_i_step;
    if (n % config.densify_interval == 0 && n < config.densify_until()) {
        const std::size_t before = f.size();
        densify_and_prune_base(state, config);
        log_event(state, EventKind::Densify, before);
    }
    if (n % config.opacity_reset_interval == 0 && n <= last_reset_iter) {
        reset_opacity(state);
        log_event(state, EventKind::OpacityReset, f.size());
    }
    if (config.mvc_prune && n % config.prune_i_step == 0 && n / config.prune_i_step <= config.prune_steps_total) {
        const int t = static_cast<int>(n / config.prune_i_step);
        const double tau = config.tau_schedule[static_cast<std::size_t>(t - 1)];
        const std::size_t before = f.size();
        mvc_prune(state, views, *features, t, tau);
        state.prune_step = t;
        log_event(state, EventKind::MvcPrune, before, t, tau);
    }
    if (loss.eadr_weight > 0.0 &&
        eadr_weight(n - 1, config.prune_steps_total, static_cast<int>(config.prune_i_step)) == 0.0) {
        log_event(state, EventKind::EadrEnabled, f.size());
    }
    state.history.push_back({n, loss, f.size()});
    return loss;
}

void train(TrainState& state, const std::vector<CameraView>& views, const FeatureStack* features,
           const TrainConfig& config, const StepCallback& on_step) {
    config.validate();
    if (config.mvc_prune) {
        if (features == nullptr) {
            throw Error(ErrorCode::InvalidConfig, "MVC pruning needs a feature stack");
        }
        for (const auto& v : views) {
            (void)features->for_view(v.view_id);
        }
    }
    while (state.iter < config.total_iters) {
        const LossBreakdown loss = train_step(state, views, features, config);
        if (on_step) {
            on_step(state, loss);
        }
    }
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRecord>& history) {
    std::ofstream out(path);
    if (!out) {
        throw Error(ErrorCode::IoError, "cannot write " + path.string());
    }
    out << "iter,photometric,eadr,eadr_weight,total,n_gaussians\n";
    out.precision(10);
    for (const auto& r : history) {
        out << r.iter << ',' << r.loss.photometric << ',' << r.loss.eadr << ',' << r.loss.eadr_weight << ','
            << r.loss.total << ',' << r.n_gaussians << '\n';
    }
    if (!out) {
        throw Error(ErrorCode::IoError, "failed writing " + path.string());
    }
}

namespace {

std::filesystem::path with_suffix(const std::filesystem::path& stem, const char* suffix) {
    return stem.parent_path() / (stem.filename().string() + suffix);
}

std::filesystem::path checkpoint_stem(const std::filesystem::path& path) {
    const std::string name = path.filename().string();
    for (const char* suffix : {".moments.bin", ".json", ".ply"}) {
        const std::string s(suffix);
        if (name.size() > s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0) {
            return path.parent_path() / name.substr(0, name.size() - s.size());
        }
    }
    return path;
}

} // namespace

void save_checkpoint(const std::filesystem::path& stem, const TrainState& state) {
    const auto ply = with_suffix(stem, ".ply");
    const auto moments = with_suffix(stem, ".moments.bin");
    write_field_ply(ply, state.field);

    std::ofstream bin(moments, std::ios::binary);
    if (!bin) {
        throw Error(ErrorCode::IoError, "cannot write " + moments.string());
    }
    const std::uint64_t m = state.field.size();
    bin.write(reinterpret_cast<const char*>(&m), sizeof(m));
    for (const auto& g : state.optimizer.groups) {
        bin.write(reinterpret_cast<const char*>(g.m.data()), static_cast<std::streamsize>(g.m.size() * sizeof(double)));
        bin.write(reinterpret_cast<const char*>(g.v.data()), static_cast<std::streamsize>(g.v.size() * sizeof(double)));
    }
    if (!bin) {
        throw Error(ErrorCode::IoError, "failed writing " + moments.string());
    }

    std::ostringstream rng;
    rng << state.rng;
    nlohmann::json j;
    j["iter"] = state.iter;
    j["t"] = state.prune_step;
    j["ply"] = ply.filename().string();
    j["moments"] = moments.filename().string();
    j["optimizer_step"] = state.optimizer.step;
    j["scene_extent"] = state.scene_extent;
    j["rng"] = rng.str();
    j["view_order"] = state.view_order;
    j["view_cursor"] = state.view_cursor;
    j["grad_accum"] = state.field.grad_accum;
    j["grad_count"] = state.field.grad_count;
    std::ofstream js(with_suffix(stem, ".json"));
    js << j.dump(2) << '\n';
    if (!js) {
        throw Error(ErrorCode::IoError, "failed writing checkpoint sidecar for " + stem.string());
    }
}

TrainState load_checkpoint(const std::filesystem::path& sidecar) {
    std::ifstream in(sidecar);
    if (!in) {
        throw Error(ErrorCode::IoError, "cannot open " + sidecar.string());
    }
    TrainState state;
    try {
        const nlohmann::json j = nlohmann::json::parse(in);
        const auto dir = sidecar.parent_path();
        state.field = read_field_ply(dir / j.at("ply").get<std::string>());
        state.iter = j.at("iter").get<long>();
        state.prune_step = j.at("t").get<int>();
        state.optimizer.step = j.at("optimizer_step").get<long>();
        state.scene_extent = j.at("scene_extent").get<double>();
        std::istringstream rng(j.at("rng").get<std::string>());
        rng >> state.rng;
        state.view_order = j.at("view_order").get<std::vector<std::size_t>>();
        state.view_cursor = j.at("view_cursor").get<std::size_t>();
        const auto accum = j.at("grad_accum").get<std::vector<double>>();
        const auto count = j.at("grad_count").get<std::vector<int>>();
        if (accum.size() == state.field.size() && count.size() == state.field.size()) {
            state.field.grad_accum = accum;
            state.field.grad_count = count;
        }

        const auto moments = dir / j.at("moments").get<std::string>();
        std::ifstream bin(moments, std::ios::binary);
        std::uint64_t m = 0;
        bin.read(reinterpret_cast<char*>(&m), sizeof(m));
        if (!bin || m != state.field.size()) {
            throw Error(ErrorCode::ParseError, moments.string() + ": moment blob does not match the field");
        }
        state.optimizer.resize_like(state.field);
        for (auto& g : state.optimizer.groups) {
            bin.read(reinterpret_cast<char*>(g.m.data()), static_cast<std::streamsize>(g.m.size() * sizeof(double)));
            bin.read(reinterpret_cast<char*>(g.v.data()), static_cast<std::streamsize>(g.v.size() * sizeof(double)));
        }
        if (!bin) {
            throw Error(ErrorCode::ParseError, moments.string() + ": truncated moment blob");
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, sidecar.string() + ": " + e.what());
    }
    return state;
}

GaussianField load_checkpoint_field(const std::filesystem::path& path) {
    if (path.extension() == ".ply") {
        return read_field_ply(path);
    }
    return read_field_ply(with_suffix(checkpoint_stem(path), ".ply"));
}

} // namespace sparsesplat
