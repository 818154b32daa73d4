// Copyright Contributors to the DiscSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "discsplat/gradients.hpp"
#include "discsplat/metrics.hpp"
#include "discsplat/rasterizer.hpp"
#include "discsplat/scene.hpp"
#include "discsplat/types.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace discsplat {

struct FitConfig {
    int iters = 2000;
    int splats = 64;
    int M = 3;
    std::uint64_t seed = 0;

    double lr_center = 2e-3;
    double lr_theta = 1e-3;
    double lr_log_scales = 5e-3;
    double lr_raw_opacity = 5e-2;
    double lr_color = 2.5e-3;
    double lr_c_curve = 2e-4;
    /// Multiplies the center and c_curve rates, which act in pixel units.
    /// 0 selects max(width, height) of the target.
    double spatial_lr_scale = 0.0;

    double lambda_ssim = 0.2;

    /// 0 disables densification.
    int densify_interval = 300;
    /// No densification after this iteration; 0 means iters / 2.
    int densify_until = 0;
    double densify_grad_threshold = 2e-4;
    double prune_opacity = 0.005;
    int max_splats = 1024;

    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-15;

    double min_contribution = 1.0 / 255.0;
    double min_transmittance = 1e-4;
    Rgb background{0.0, 0.0, 0.0};

    /// Freeze c_curve and render without scissoring (plain splatting).
    bool baseline = false;
    int checkpoint_interval = 250;

    friend bool operator==(const FitConfig &, const FitConfig &) = default;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Throws ConfigError on any violated constraint.
void validate(const FitConfig &config);

/// Unknown keys are rejected. Missing keys keep their defaults.
FitConfig fit_config_from_json(std::string_view text);
std::string fit_config_to_json(const FitConfig &config);
FitConfig read_fit_config(const std::filesystem::path &path);

RasterConfig raster_config(const FitConfig &config);

/// Parameters per flat2d splat in optimizer order:
/// center x, y | theta | log_scale x, y | raw_opacity | color r, g, b | c_curve (8M).
inline constexpr int kFixedParams = 9;
inline int params_per_splat(int M) { return kFixedParams + 8 * M; }

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::int64_t step = 0;

    friend bool operator==(const AdamState &, const AdamState &) = default;
};

std::string adam_state_to_json(const AdamState &state);
AdamState adam_state_from_json(std::string_view text);

/// Flattens parameters or gradients in optimizer order.
std::vector<double> flatten_params(const Scene &scene);
std::vector<double> flatten_gradients(const Scene &scene, const GradientBuffer &grads);
void unflatten_params(Scene &scene, std::span<const double> params);

/// One bias-corrected Adam update per parameter group. Colors are clamped
/// to [0, 1] afterwards. `spatial_scale` multiplies the center and c_curve rates.
void adam_step(Scene &scene, const GradientBuffer &grads, AdamState &state, const FitConfig &config,
               double spatial_scale, bool curves_frozen = false);

/// Running per-splat statistics for densification.
struct DensifyStats {
    std::vector<double> grad_norm_sum;
    std::vector<int> visible;

    void reset(std::size_t n);
    /// Adds |d center| of every splat that received any gradient.
    void accumulate(const GradientBuffer &grads);
};

/// Clones splats whose mean center-gradient norm exceeds the threshold and
/// prunes splats with opacity below config.prune_opacity. Clones copy every
/// attribute (c_curve included), get their center jittered by 0.1 * max
/// scale and a depth_key behind every existing splat. Optimizer moments
/// follow their splats; clones start from zero moments.
void densify(Scene &scene, const DensifyStats &stats, AdamState &state, const FitConfig &config,
             std::uint64_t stream);

struct FitCheckpoint {
    int iteration = 0;
    double loss = 0.0;
    double psnr = 0.0;
    double ssim = 0.0;
    std::size_t splats = 0;
    double wall_seconds = 0.0;
};

struct FitReport {
    std::vector<FitCheckpoint> checkpoints;
    std::string scene_path;
};

/// CSV without the wall-time column, so identical runs give identical bytes.
std::string report_csv(const FitReport &report);
std::string report_summary(const FitReport &report);

struct FitResult {
    Scene scene;
    FitReport report;
    std::vector<double> loss_history; // one entry per iteration
    Image final_render;
    CurveStats curve_stats;
};

struct FitCallbacks {
    std::function<void(const FitCheckpoint &, const Image &render)> on_checkpoint;
};

FitResult fit(const Image &target, const FitConfig &config, const FitCallbacks &callbacks = {});

/// Same loop from a given starting scene (flat2d only).
FitResult fit_scene(const Image &target, Scene scene, const FitConfig &config, const FitCallbacks &callbacks = {});

} // namespace discsplat
