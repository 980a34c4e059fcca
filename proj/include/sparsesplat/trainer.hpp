#pragma once

#include "sparsesplat/camera.hpp"
#include "sparsesplat/features.hpp"
#include "sparsesplat/gaussian_field.hpp"
#include "sparsesplat/initializer.hpp"
#include "sparsesplat/losses.hpp"
#include "sparsesplat/rasterizer.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace sparsesplat {

enum class TrainPreset { ForwardFacing, Panoramic };

TrainPreset parse_train_preset(std::string_view name);
std::string_view to_string(TrainPreset preset);

struct TrainConfig {
    TrainPreset preset = TrainPreset::ForwardFacing;
    long total_iters = 10000;

    double position_lr_init = 0.0016;
    double position_lr_final = 0.000016;
    double rotation_lr = 0.001;
    double scale_lr = 0.005;
    double opacity_lr = 0.05;
    double sh_lr = 0.0025;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-15;

    long densify_interval = 300;
    long opacity_reset_interval = 1000;
    double densify_grad_threshold = 0.0005;
    long densify_until_iter = -1; // < 0: half of total_iters
    double percent_dense = 0.01;  // clone/split boundary as a fraction of the scene extent
    double min_opacity = 0.005;
    double max_scale_fraction = 0.1; // oversize prune, active after the first opacity reset
    double split_scale_divisor = 1.6;

    int prune_steps_total = 3;
    long prune_i_step = 3000;
    std::vector<double> tau_schedule{0.75, 0.8, 0.85};
    std::vector<int> level_dims{64, 64, 128, 256};

    double lambda_dssim = 0.2;
    double eadr_beta = 2.0;
    double eadr_depth_scale = 1.0;

    int sh_degree = 1;
    Eigen::Vector3d background = Eigen::Vector3d::Zero();
    std::uint64_t rng_seed = 0;

    bool mvc_prune = true;
    bool eadr = true;

    /// Defaults of a preset: forward_facing uses T = 3 and τ = [0.75, 0.8, 0.85];
    /// panoramic uses T = 4, τ = [0.6, 0.65, 0.7, 0.8] and i_step 2500.
    static TrainConfig for_preset(TrainPreset preset);

    long densify_until() const { return densify_until_iter < 0 ? total_iters / 2 : densify_until_iter; }

    /// Sets one field from its config-file key; throws InvalidConfig for unknown
    /// keys and ParseError for malformed values.
    void set(std::string_view key, std::string_view value);

    /// Throws InvalidConfig when the τ list length differs from T, a learning
    /// rate is negative or an interval is below 1.
    void validate() const;
};

/// Applies `key = value` lines (`#` comments) on top of `config`. A `preset`
/// line resets every other key to that preset's defaults, so it should come
/// first.
TrainConfig load_config_file(const std::filesystem::path& path, TrainConfig config = {});

/// First and second moments for one parameter group, laid out like the group.
struct AdamMoments {
    std::vector<double> m;
    std::vector<double> v;
};

enum ParamGroup : std::size_t { kGroupPosition, kGroupRotation, kGroupScale, kGroupOpacity, kGroupSh, kGroupCount };

struct OptimizerState {
    std::array<AdamMoments, kGroupCount> groups;
    long step = 0;

    void resize_like(const GaussianField& field);
    void compact(const GaussianField& field_before, std::span<const std::uint8_t> keep);
    bool consistent_with(const GaussianField& field) const;
};

enum class EventKind { Densify, OpacityReset, MvcPrune, EadrEnabled };

std::string_view to_string(EventKind kind);

struct TrainEvent {
    long iter = 0;
    EventKind kind = EventKind::Densify;
    int prune_step = 0; // MvcPrune only
    double tau = 0.0;   // MvcPrune only
    std::size_t before = 0;
    std::size_t after = 0;
};

struct LossRecord {
    long iter = 0;
    LossBreakdown loss;
    std::size_t n_gaussians = 0;
};

struct TrainState {
    GaussianField field;
    long iter = 0;       // completed iterations
    int prune_step = 0;  // MVC prunes executed so far
    double scene_extent = 1.0;
    OptimizerState optimizer;
    std::vector<TrainEvent> events;
    std::vector<LossRecord> history;
    std::mt19937_64 rng;
    std::vector<std::size_t> view_order;
    std::size_t view_cursor = 0;
    Rasterizer rasterizer;
};

/// 1.1 × the largest camera-center distance from the centroid of the centers.
double scene_extent(const std::vector<CameraView>& views);

/// One Gaussian per seed point: SH DC from the point color, isotropic scale
/// from the mean distance to the 3 nearest neighbors, opacity 0.1, identity
/// rotation.
GaussianField field_from_seed(const PointCloudSeed& seed, int sh_degree);

/// Throws EmptyField for an empty seed.
TrainState init_state(const PointCloudSeed& seed, const std::vector<CameraView>& views, const TrainConfig& config);

/// exp(lerp(ln lr_init, ln lr_final, iter / total_iters)).
double position_lr(long iter, const TrainConfig& config);

/// Runs iteration state.iter + 1: render one view, photometric loss plus the
/// gated EADR term, backward, Adam update, then the scheduled densify, opacity
/// reset and MVC prune events in that order. `features` may be null when MVC
/// pruning is disabled. Throws EmptyField.
LossBreakdown train_step(TrainState& state, const std::vector<CameraView>& views, const FeatureStack* features,
                         const TrainConfig& config);

/// Clone/split by mean accumulated screen-space gradient, then the opacity and
/// oversize prunes; resets the gradient statistics.
void densify_and_prune_base(TrainState& state, const TrainConfig& config);

/// Sets every opacity to 0.01 and clears the opacity moments.
void reset_opacity(TrainState& state);

/// MVC prune with step t and threshold τ; returns the number removed.
std::size_t mvc_prune(TrainState& state, const std::vector<CameraView>& views, const FeatureStack& features, int t,
                      double tau);

/// Drops the flagged primitives (1 = remove) from the field and its moments.
void remove_primitives(TrainState& state, std::span<const std::uint8_t> remove);

using StepCallback = std::function<void(const TrainState&, const LossBreakdown&)>;

/// Steps until state.iter reaches config.total_iters.
void train(TrainState& state, const std::vector<CameraView>& views, const FeatureStack* features,
           const TrainConfig& config, const StepCallback& on_step = {});

/// Columns: iter, photometric, eadr, eadr_weight, total, n_gaussians.
void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRecord>& history);

/// Writes <stem>.ply, <stem>.json and <stem>.moments.bin.
void save_checkpoint(const std::filesystem::path& stem, const TrainState& state);

/// Reads a checkpoint written by save_checkpoint from its JSON sidecar.
TrainState load_checkpoint(const std::filesystem::path& sidecar);

/// Accepts a checkpoint PLY, its JSON sidecar or a stem and returns the field.
GaussianField load_checkpoint_field(const std::filesystem::path& path);

} // namespace sparsesplat
