// Copyright Contributors to the DiscSplat Project
// SPDX-License-Identifier: Apache-2.0

#include "discsplat/fit.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

namespace discsplat {

using nlohmann::json;

void validate(const FitConfig &c) {
    auto fail = [](const std::string &what) { throw ConfigError("invalid config: " + what); };
    if (c.iters < 0) fail("iters must be >= 0");
    if (c.splats < 1) fail("splats must be >= 1");
    if (c.M < 1 || c.M > kMaxCurves) fail("M must be in [1, " + std::to_string(kMaxCurves) + "]");
    for (double lr : {c.lr_center, c.lr_theta, c.lr_log_scales, c.lr_raw_opacity, c.lr_color, c.lr_c_curve}) {
        if (!(lr > 0.0) || !std::isfinite(lr)) fail("learning rates must be positive");
    }
    if (!(c.spatial_lr_scale >= 0.0) || !std::isfinite(c.spatial_lr_scale)) fail("spatial_lr_scale must be >= 0");
    if (!(c.lambda_ssim >= 0.0 && c.lambda_ssim <= 1.0)) fail("lambda_ssim must be in [0, 1]");
    if (c.densify_interval < 0) fail("densify_interval must be >= 0");
    if (c.densify_until < 0) fail("densify_until must be >= 0");
    if (!(c.densify_grad_threshold >= 0.0)) fail("densify_grad_threshold must be >= 0");
    if (!(c.prune_opacity >= 0.0 && c.prune_opacity < 1.0)) fail("prune_opacity must be in [0, 1)");
    if (c.max_splats < c.splats) fail("max_splats must be >= splats");
    if (!(c.adam_beta1 >= 0.0 && c.adam_beta1 < 1.0)) fail("adam_beta1 must be in [0, 1)");
    if (!(c.adam_beta2 >= 0.0 && c.adam_beta2 < 1.0)) fail("adam_beta2 must be in [0, 1)");
    if (!(c.adam_eps > 0.0)) fail("adam_eps must be positive");
    if (!(c.min_contribution > 0.0 && c.min_contribution < 1.0)) fail("min_contribution must be in (0, 1)");
    if (!(c.min_transmittance > 0.0 && c.min_transmittance < 1.0)) fail("min_transmittance must be in (0, 1)");
    for (double b : c.background) {
        if (!(b >= 0.0 && b <= 1.0)) fail("background must be in [0, 1]");
    }
    if (c.checkpoint_interval < 1) fail("checkpoint_interval must be >= 1");
}

namespace {

template <class T>
void read_key(const json &j, const char *key, T &out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

} // namespace

FitConfig fit_config_from_json(std::string_view text) {
    FitConfig c;
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception &e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    static const char *kKeys[] = {"iters",
                                  "splats",
                                  "M",
                                  "seed",
                                  "lr_center",
                                  "lr_theta",
                                  "lr_log_scales",
                                  "lr_raw_opacity",
                                  "lr_color",
                                  "lr_c_curve",
                                  "spatial_lr_scale",
                                  "lambda_ssim",
                                  "densify_interval",
                                  "densify_until",
                                  "densify_grad_threshold",
                                  "prune_opacity",
                                  "max_splats",
                                  "adam_beta1",
                                  "adam_beta2",
                                  "adam_eps",
                                  "min_contribution",
                                  "min_transmittance",
                                  "background",
                                  "baseline",
                                  "checkpoint_interval"};
    for (const auto &item : j.items()) {
        if (std::find_if(std::begin(kKeys), std::end(kKeys), [&](const char *k) { return item.key() == k; }) ==
            std::end(kKeys)) {
            throw ConfigError("unknown config key '" + item.key() + "'");
        }
    }
    try {
        read_key(j, "iters", c.iters);
        read_key(j, "splats", c.splats);
        read_key(j, "M", c.M);
        read_key(j, "seed", c.seed);
        read_key(j, "lr_center", c.lr_center);
        read_key(j, "lr_theta", c.lr_theta);
        read_key(j, "lr_log_scales", c.lr_log_scales);
        read_key(j, "lr_raw_opacity", c.lr_raw_opacity);
        read_key(j, "lr_color", c.lr_color);
        read_key(j, "lr_c_curve", c.lr_c_curve);
        read_key(j, "spatial_lr_scale", c.spatial_lr_scale);
        read_key(j, "lambda_ssim", c.lambda_ssim);
        read_key(j, "densify_interval", c.densify_interval);
        read_key(j, "densify_until", c.densify_until);
        read_key(j, "densify_grad_threshold", c.densify_grad_threshold);
        read_key(j, "prune_opacity", c.prune_opacity);
        read_key(j, "max_splats", c.max_splats);
        read_key(j, "adam_beta1", c.adam_beta1);
        read_key(j, "adam_beta2", c.adam_beta2);
        read_key(j, "adam_eps", c.adam_eps);
        read_key(j, "min_contribution", c.min_contribution);
        read_key(j, "min_transmittance", c.min_transmittance);
        read_key(j, "background", c.background);
        read_key(j, "baseline", c.baseline);
        read_key(j, "checkpoint_interval", c.checkpoint_interval);
    } catch (const json::exception &e) {
        throw ConfigError(std::string("config value has the wrong type: ") + e.what());
    }
    validate(c);
    return c;
}

std::string fit_config_to_json(const FitConfig &c) {
    json j;
    j["iters"] = c.iters;
    j["splats"] = c.splats;
    j["M"] = c.M;
    j["seed"] = c.seed;
    j["lr_center"] = c.lr_center;
    j["lr_theta"] = c.lr_theta;
    j["lr_log_scales"] = c.lr_log_scales;
    j["lr_raw_opacity"] = c.lr_raw_opacity;
    j["lr_color"] = c.lr_color;
    j["lr_c_curve"] = c.lr_c_curve;
    j["spatial_lr_scale"] = c.spatial_lr_scale;
    j["lambda_ssim"] = c.lambda_ssim;
    j["densify_interval"] = c.densify_interval;
    j["densify_until"] = c.densify_until;
    j["densify_grad_threshold"] = c.densify_grad_threshold;
    j["prune_opacity"] = c.prune_opacity;
    j["max_splats"] = c.max_splats;
    j["adam_beta1"] = c.adam_beta1;
    j["adam_beta2"] = c.adam_beta2;
    j["adam_eps"] = c.adam_eps;
    j["min_contribution"] = c.min_contribution;
    j["min_transmittance"] = c.min_transmittance;
    j["background"] = c.background;
    j["baseline"] = c.baseline;
    j["checkpoint_interval"] = c.checkpoint_interval;
    return j.dump(1) + "\n";
}

FitConfig read_fit_config(const std::filesystem::path &path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config '" + path.string() + "'");
    std::stringstream ss;
    ss << is.rdbuf();
    return fit_config_from_json(ss.str());
}

RasterConfig raster_config(const FitConfig &config) {
    RasterConfig rc;
    rc.min_contribution = config.min_contribution;
    rc.min_transmittance = config.min_transmittance;
    rc.curves_enabled = !config.baseline;
    return rc;
}

std::string adam_state_to_json(const AdamState &state) {
    json j;
    j["step"] = state.step;
    j["m"] = state.m;
    j["v"] = state.v;
    return j.dump() + "\n";
}

AdamState adam_state_from_json(std::string_view text) {
    try {
        const json j = json::parse(text);
        AdamState s;
        s.step = j.at("step").get<std::int64_t>();
        s.m = j.at("m").get<std::vector<double>>();
        s.v = j.at("v").get<std::vector<double>>();
        if (s.m.size() != s.v.size()) throw ConfigError("optimizer state: moment sizes differ");
        return s;
    } catch (const json::exception &e) {
        throw ConfigError(std::string("optimizer state is malformed: ") + e.what());
    }
}

namespace {

void require_flat(const Scene &scene) {
    if (scene.mode != SceneMode::flat2d) throw SceneError("the optimizer handles flat2d scenes only");
}

} // namespace

std::vector<double> flatten_params(const Scene &scene) {
    require_flat(scene);
    std::vector<double> out;
    out.reserve(scene.splats.size() * params_per_splat(scene.M));
    for (const Splat &s : scene.splats) {
        out.insert(out.end(), {s.center.x, s.center.y, s.theta, s.log_scales.x, s.log_scales.y, s.raw_opacity,
                               s.color[0], s.color[1], s.color[2]});
        for (const Vec2 &c : s.c_curve) out.insert(out.end(), {c.x, c.y});
    }
    return out;
}

std::vector<double> flatten_gradients(const Scene &scene, const GradientBuffer &grads) {
    require_flat(scene);
    if (grads.splats.size() != scene.splats.size()) {
        throw TapeMismatchError("gradient buffer does not match the scene");
    }
    std::vector<double> out;
    out.reserve(scene.splats.size() * params_per_splat(scene.M));
    for (std::size_t i = 0; i < scene.splats.size(); ++i) {
        const SplatGradient &g = grads.splats[i];
        out.insert(out.end(), {g.d_center.x, g.d_center.y, g.d_theta, g.d_log_scales.x, g.d_log_scales.y,
                               g.d_raw_opacity, g.d_color[0], g.d_color[1], g.d_color[2]});
        for (std::size_t k = 0; k < scene.splats[i].c_curve.size(); ++k) {
            const Vec2 c = k < g.d_c_curve.size() ? g.d_c_curve[k] : Vec2{};
            out.insert(out.end(), {c.x, c.y});
        }
    }
    return out;
}

void unflatten_params(Scene &scene, std::span<const double> p) {
    require_flat(scene);
    std::size_t i = 0;
    for (Splat &s : scene.splats) {
        s.center.x = p[i++];
        s.center.y = p[i++];
        s.theta = p[i++];
        s.log_scales.x = p[i++];
        s.log_scales.y = p[i++];
        s.raw_opacity = p[i++];
        for (int c = 0; c < 3; ++c) s.color[c] = p[i++];
        for (Vec2 &c : s.c_curve) {
            c.x = p[i++];
            c.y = p[i++];
        }
    }
}

void adam_step(Scene &scene, const GradientBuffer &grads, AdamState &state, const FitConfig &config,
               double spatial_scale, bool curves_frozen) {
    std::vector<double> params = flatten_params(scene);
    const std::vector<double> g = flatten_gradients(scene, grads);
    if (state.m.empty() && state.step == 0) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
    }
    if (state.m.size() != params.size() || state.v.size() != params.size()) {
        throw TapeMismatchError("optimizer state does not match the scene");
    }
    const int stride = params_per_splat(scene.M);
    std::vector<double> lr(stride);
    lr[0] = lr[1] = config.lr_center * spatial_scale;
    lr[2] = config.lr_theta;
    lr[3] = lr[4] = config.lr_log_scales;
    lr[5] = config.lr_raw_opacity;
    lr[6] = lr[7] = lr[8] = config.lr_color;
    for (int k = kFixedParams; k < stride; ++k) lr[k] = (config.baseline || curves_frozen) ? 0.0 : config.lr_c_curve * spatial_scale;

    ++state.step;
    const double bc1 = 1.0 - std::pow(config.adam_beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(config.adam_beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double rate = lr[i % stride];
        if (rate == 0.0) continue;
        state.m[i] = config.adam_beta1 * state.m[i] + (1.0 - config.adam_beta1) * g[i];
        state.v[i] = config.adam_beta2 * state.v[i] + (1.0 - config.adam_beta2) * g[i] * g[i];
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        params[i] -= rate * m_hat / (std::sqrt(v_hat) + config.adam_eps);
    }
    unflatten_params(scene, params);
    for (Splat &s : scene.splats)
        for (double &c : s.color) c = std::clamp(c, 0.0, 1.0);
}

void DensifyStats::reset(std::size_t n) {
    grad_norm_sum.assign(n, 0.0);
    visible.assign(n, 0);
}

void DensifyStats::accumulate(const GradientBuffer &grads) {
    if (grads.splats.size() != grad_norm_sum.size()) reset(grads.splats.size());
    for (std::size_t i = 0; i < grads.splats.size(); ++i) {
        const SplatGradient &g = grads.splats[i];
        const bool touched = g.d_raw_opacity != 0.0 || g.d_color != Rgb{} || g.d_center.x != 0.0 ||
                             g.d_center.y != 0.0;
        if (!touched) continue;
        grad_norm_sum[i] += std::hypot(g.d_center.x, g.d_center.y);
        ++visible[i];
    }
}

void densify(Scene &scene, const DensifyStats &stats, AdamState &state, const FitConfig &config,
             std::uint64_t stream) {
    require_flat(scene);
    const std::size_t n = scene.splats.size();
    const int stride = params_per_splat(scene.M);
    const bool has_moments = state.m.size() == n * stride;

    std::vector<std::size_t> clones;
    if (stats.grad_norm_sum.size() == n) {
        for (std::size_t i = 0; i < n; ++i) {
            if (stats.visible[i] == 0) continue;
            if (scene.splats[i].opacity() < config.prune_opacity) continue;
            if (stats.grad_norm_sum[i] / stats.visible[i] > config.densify_grad_threshold) clones.push_back(i);
        }
    }

    std::mt19937_64 rng(config.seed ^ (0x9e3779b97f4a7c15ull * (stream + 1)));
    std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
    double back = 0.0;
    for (const Splat &s : scene.splats) back = std::max(back, s.depth_key);

    Scene out = scene;
    out.splats.clear();
    AdamState next;
    next.step = state.step;
    auto keep_moments = [&](std::size_t i) {
        if (!has_moments) return;
        next.m.insert(next.m.end(), state.m.begin() + i * stride, state.m.begin() + (i + 1) * stride);
        next.v.insert(next.v.end(), state.v.begin() + i * stride, state.v.begin() + (i + 1) * stride);
    };
    for (std::size_t i = 0; i < n; ++i) {
        if (scene.splats[i].opacity() < config.prune_opacity) continue;
        out.splats.push_back(scene.splats[i]);
        keep_moments(i);
    }
    for (std::size_t i : clones) {
        if (out.splats.size() >= static_cast<std::size_t>(config.max_splats)) break;
        Splat c = scene.splats[i];
        const double reach = 0.1 * std::max(c.scale(0), c.scale(1));
        const double a = angle(rng);
        c.center.x += reach * std::cos(a);
        c.center.y += reach * std::sin(a);
        back += 1.0;
        c.depth_key = back;
        out.splats.push_back(std::move(c));
        if (has_moments) {
            next.m.insert(next.m.end(), stride, 0.0);
            next.v.insert(next.v.end(), stride, 0.0);
        }
    }
    scene = std::move(out);
    if (has_moments) state = std::move(next);
}

std::string report_csv(const FitReport &report) {
    std::ostringstream os;
    os << "iteration,loss,psnr,ssim,splats\n";
    os << std::setprecision(10);
    for (const auto &c : report.checkpoints) {
        os << c.iteration << ',' << c.loss << ',' << c.psnr << ',' << c.ssim << ',' << c.splats << '\n';
    }
    return os.str();
}

std::string report_summary(const FitReport &report) {
    std::ostringstream os;
    os << std::fixed;
    os << "iter      loss       PSNR    SSIM     splats  time(s)\n";
    for (const auto &c : report.checkpoints) {
        os << std::setw(5) << c.iteration << "  " << std::setprecision(6) << std::setw(9) << c.loss << "  "
           << std::setprecision(3) << std::setw(7) << c.psnr << "  " << std::setprecision(4) << c.ssim << "  "
           << std::setw(6) << c.splats << "  " << std::setprecision(2) << c.wall_seconds << '\n';
    }
    if (!report.scene_path.empty()) os << "scene: " << report.scene_path << '\n';
    return os.str();
}

FitResult fit_scene(const Image &target, Scene scene, const FitConfig &config, const FitCallbacks &callbacks) {
    validate(config);
    require_flat(scene);
    const int w = target.width();
    const int h = target.height();
    const double spatial = config.spatial_lr_scale > 0.0 ? config.spatial_lr_scale : std::max(w, h);
    const RasterConfig rc = raster_config(config);
    const int until = config.densify_until > 0 ? config.densify_until : config.iters / 2;
    BackwardOptions bo;
    bo.curve_gradients = !config.baseline;

    FitResult result;
    AdamState state;
    DensifyStats stats;
    stats.reset(scene.splats.size());
    const auto start = std::chrono::steady_clock::now();

    for (int it = 0;; ++it) {
        const auto prepared = prepare(scene, nullptr, w, h, rc);
        const RenderTape tape = render(prepared, w, h, scene.background, rc);
        LossValue lv = loss(tape.image, target, config.lambda_ssim);
        if (it % config.checkpoint_interval == 0 || it == config.iters) {
            FitCheckpoint cp;
            cp.iteration = it;
            cp.loss = lv.value;
            const Metrics m = metrics(tape.image, target);
            cp.psnr = m.psnr;
            cp.ssim = m.ssim;
            cp.splats = scene.splats.size();
            cp.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            result.report.checkpoints.push_back(cp);
            if (callbacks.on_checkpoint) callbacks.on_checkpoint(cp, tape.image);
        }
        if (it == config.iters) {
            result.final_render = tape.image;
            break;
        }
        result.loss_history.push_back(lv.value);

        BackwardResult br = backward(scene, nullptr, prepared, tape, lv.d_render, rc, bo);
        result.curve_stats.merge(br.curve_stats);
        adam_step(scene, br.grads, state, config, spatial);
        stats.accumulate(br.grads);
        if (config.densify_interval > 0 && (it + 1) % config.densify_interval == 0 && it + 1 <= until) {
            densify(scene, stats, state, config, static_cast<std::uint64_t>(it + 1));
            stats.reset(scene.splats.size());
        }
    }
    result.scene = std::move(scene);
    return result;
}

FitResult fit(const Image &target, const FitConfig &config, const FitCallbacks &callbacks) {
    validate(config);
    Scene scene = init_scene(target.width(), target.height(), config.splats, config.M, config.seed, &target);
    scene.background = config.background;
    return fit_scene(target, std::move(scene), config, callbacks);
}

} // namespace discsplat
