// Copyright Contributors to the DiscSplat Project
// SPDX-License-Identifier: Apache-2.0

#include "discsplat/scene.hpp"

#include "discsplat/bezier.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

namespace discsplat {

using nlohmann::json;

std::string_view to_string(SceneMode mode) {
    switch (mode) {
    case SceneMode::flat2d: return "flat2d";
    case SceneMode::projected3d: return "projected3d";
    case SceneMode::projected3d_curve3d: return "projected3d_curve3d";
    }
    return "flat2d";
}

SceneMode scene_mode_from_string(std::string_view name) {
    if (name == "flat2d") return SceneMode::flat2d;
    if (name == "projected3d") return SceneMode::projected3d;
    if (name == "projected3d_curve3d") return SceneMode::projected3d_curve3d;
    throw SceneError("unknown scene mode '" + std::string(name) + "'");
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double logit(double p) { return std::log(p / (1.0 - p)); }

double Splat::opacity() const { return sigmoid(raw_opacity); }
double Splat::scale(int axis) const { return std::exp(log_scales[axis]); }

std::array<Vec2, 2> rotation_columns(double theta) {
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    return {Vec2{c, s}, Vec2{-s, c}};
}

Sym2 covariance_2x2(const Splat &splat) {
    const double c = std::cos(splat.theta);
    const double s = std::sin(splat.theta);
    const double v1 = std::exp(2.0 * splat.log_scales.x);
    const double v2 = std::exp(2.0 * splat.log_scales.y);
    return {c * c * v1 + s * s * v2, c * s * (v1 - v2), s * s * v1 + c * c * v2};
}

std::vector<Vec2> curve_points_to_image(const Splat &splat) {
    const auto [r1, r2] = rotation_columns(splat.theta);
    const Vec2 mu = splat.center2d();
    std::vector<Vec2> out;
    out.reserve(splat.c_curve.size());
    for (const auto &q : splat.c_curve) out.push_back(mu + q.x * r1 + q.y * r2);
    return out;
}

namespace {

// Bernstein control values of c0 + c1 t + c2 t^2 + c3 t^3.
std::array<double, 4> to_bernstein(const std::array<double, 4> &c) {
    return {c[0], c[0] + c[1] / 3.0, c[0] + 2.0 * c[1] / 3.0 + c[2] / 3.0, c[0] + c[1] + c[2] + c[3]};
}

} // namespace

std::vector<Vec2> non_cutting_curves(double max_scale, int M) {
    // Each curve, in its own (v, u) frame with u pointing away from the
    // center, is  v = d (s + s^3 / 4),  u = d (1 + s^2 / 10),  s = 2t - 1.
    // u >= d > 4 sigma for every real t, so the unbounded curve never enters
    // the support; v is a true cubic, which keeps the implicit form regular.
    // The 1.5 px margin covers the rasterizer's covariance floor for tiny splats.
    const double d = 4.0 * max_scale + 1.5;
    // s = 2t - 1 expanded: s = -1 + 2t, s^2 = 1 - 4t + 4t^2, s^3 = -1 + 6t - 12t^2 + 8t^3
    const std::array<double, 4> s1{-1.0, 2.0, 0.0, 0.0};
    const std::array<double, 4> s2{1.0, -4.0, 4.0, 0.0};
    const std::array<double, 4> s3{-1.0, 6.0, -12.0, 8.0};
    std::array<double, 4> v_pow{}, u_pow{};
    for (int i = 0; i < 4; ++i) {
        v_pow[i] = d * (s1[i] + 0.25 * s3[i]);
        u_pow[i] = d * (0.1 * s2[i]);
    }
    u_pow[0] += d;
    const auto v_ctl = to_bernstein(v_pow);
    const auto u_ctl = to_bernstein(u_pow);

    std::vector<Vec2> out;
    out.reserve(4 * M);
    for (int k = 0; k < M; ++k) {
        const double a = 2.0 * std::numbers::pi * k / M;
        const Vec2 u{std::cos(a), std::sin(a)};
        const Vec2 v{-std::sin(a), std::cos(a)};
        CubicBezier c;
        for (int i = 0; i < 4; ++i) c.points[i] = u_ctl[i] * u + v_ctl[i] * v;
        // The implicit sign follows control-point order; reversing the order
        // flips it, so pick the order that keeps the center.
        if (classify_point(implicitize(c), {0.0, 0.0}) == 0) std::reverse(c.points.begin(), c.points.end());
        out.insert(out.end(), c.points.begin(), c.points.end());
    }
    return out;
}

Scene init_scene(int width, int height, int n, int M, std::uint64_t seed, const Image *target) {
    if (width <= 0 || height <= 0) throw SceneError("init_scene: image size must be positive");
    if (n < 1 || M < 1) throw SceneError("init_scene: need at least one splat and one curve");
    if (M > kMaxCurves) throw SceneError("init_scene: too many curves per splat");

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> jitter(-0.25, 0.25);
    std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);

    const int cols = std::max(1, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n) * width / height))));
    const int rows = (n + cols - 1) / cols;
    const double cell_w = static_cast<double>(width) / cols;
    const double cell_h = static_cast<double>(height) / rows;
    const double scale = std::sqrt(static_cast<double>(width) * height / n / std::numbers::pi);
    const auto curves = non_cutting_curves(scale, M);

    Scene scene;
    scene.M = M;
    scene.mode = SceneMode::flat2d;
    scene.background = {0.0, 0.0, 0.0};
    scene.splats.reserve(n);
    for (int i = 0; i < n; ++i) {
        Splat s;
        const int cx = i % cols;
        const int cy = i / cols;
        s.center.x = (cx + 0.5 + jitter(rng)) * cell_w;
        s.center.y = (cy + 0.5 + jitter(rng)) * cell_h;
        s.theta = angle(rng);
        s.log_scales = {std::log(scale), std::log(scale), 0.0};
        s.raw_opacity = 0.0;
        if (target && target->width() > 0 && target->height() > 0) {
            const int px = std::clamp(static_cast<int>(s.center.x), 0, target->width() - 1);
            const int py = std::clamp(static_cast<int>(s.center.y), 0, target->height() - 1);
            for (int c = 0; c < 3; ++c) s.color[c] = std::clamp(target->at(px, py, c), 0.0, 1.0);
        } else {
            s.color = {0.5, 0.5, 0.5};
        }
        s.c_curve = curves;
        s.depth_key = i;
        scene.splats.push_back(std::move(s));
    }
    return scene;
}

void validate(const Scene &scene) {
    if (scene.M < 1 || scene.M > kMaxCurves) throw SceneError("scene: M out of range");
    const std::size_t n_points = static_cast<std::size_t>(4 * scene.M);
    std::set<double> keys;
    for (std::size_t i = 0; i < scene.splats.size(); ++i) {
        const auto &s = scene.splats[i];
        const std::string where = "scene: splat " + std::to_string(i) + ": ";
        if (scene.mode == SceneMode::projected3d_curve3d) {
            if (s.c3d_curve.size() != n_points) throw SceneError(where + "c3d_curve must have 4M rows");
        } else if (s.c_curve.size() != n_points) {
            throw SceneError(where + "c_curve must have 4M rows");
        }
        for (double v : {s.center.x, s.center.y, s.center.z, s.theta, s.log_scales.x, s.log_scales.y,
                         s.log_scales.z, s.raw_opacity, s.depth_key}) {
            if (!std::isfinite(v)) throw SceneError(where + "non-finite parameter");
        }
        for (double c : s.color) {
            if (!(c >= 0.0 && c <= 1.0)) throw SceneError(where + "color outside [0, 1]");
        }
        if (scene.mode == SceneMode::flat2d && !keys.insert(s.depth_key).second) {
            throw SceneError(where + "duplicate depth_key");
        }
    }
}

namespace {

json vec(const Vec2 &v) { return json::array({v.x, v.y}); }
json vec(const Vec3 &v) { return json::array({v.x, v.y, v.z}); }

template <std::size_t N>
std::array<double, N> read_array(const json &j, const char *field) {
    if (!j.is_array() || j.size() != N) {
        throw SceneError(std::string("scene: field '") + field + "' must have " + std::to_string(N) + " numbers");
    }
    std::array<double, N> out{};
    for (std::size_t i = 0; i < N; ++i) out[i] = j[i].get<double>();
    return out;
}

} // namespace

std::string scene_to_json(const Scene &scene) {
    const bool flat = scene.mode == SceneMode::flat2d;
    json splats = json::array();
    for (const auto &s : scene.splats) {
        json j;
        if (flat) {
            j["center"] = vec(s.center2d());
            j["theta"] = s.theta;
            j["log_scales"] = json::array({s.log_scales.x, s.log_scales.y});
        } else {
            j["center"] = vec(s.center);
            j["quat"] = json::array({s.rotation.w, s.rotation.x, s.rotation.y, s.rotation.z});
            j["log_scales"] = vec(s.log_scales);
        }
        j["raw_opacity"] = s.raw_opacity;
        j["color"] = json::array({s.color[0], s.color[1], s.color[2]});
        if (scene.mode == SceneMode::projected3d_curve3d) {
            json pts = json::array();
            for (const auto &p : s.c3d_curve) pts.push_back(vec(p));
            j["c3d_curve"] = std::move(pts);
        } else {
            json pts = json::array();
            for (const auto &p : s.c_curve) pts.push_back(vec(p));
            j["c_curve"] = std::move(pts);
        }
        j["depth_key"] = s.depth_key;
        splats.push_back(std::move(j));
    }
    json doc;
    doc["format_version"] = 1;
    doc["mode"] = std::string(to_string(scene.mode));
    doc["M"] = scene.M;
    doc["background"] = json::array({scene.background[0], scene.background[1], scene.background[2]});
    doc["splats"] = std::move(splats);
    return doc.dump(1) + "\n";
}

Scene scene_from_json(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error &e) {
        throw SceneError(std::string("scene: invalid JSON: ") + e.what());
    }
    try {
        if (doc.value("format_version", 0) != 1) throw SceneError("scene: unsupported format_version");
        Scene scene;
        scene.mode = scene_mode_from_string(doc.at("mode").get<std::string>());
        scene.M = doc.at("M").get<int>();
        scene.background = read_array<3>(doc.at("background"), "background");
        const bool flat = scene.mode == SceneMode::flat2d;
        for (const auto &j : doc.at("splats")) {
            Splat s;
            if (flat) {
                const auto c = read_array<2>(j.at("center"), "center");
                s.center = {c[0], c[1], 0.0};
                s.theta = j.at("theta").get<double>();
                const auto ls = read_array<2>(j.at("log_scales"), "log_scales");
                s.log_scales = {ls[0], ls[1], 0.0};
            } else {
                const auto c = read_array<3>(j.at("center"), "center");
                s.center = {c[0], c[1], c[2]};
                const auto q = read_array<4>(j.at("quat"), "quat");
                s.rotation = {q[0], q[1], q[2], q[3]};
                const auto ls = read_array<3>(j.at("log_scales"), "log_scales");
                s.log_scales = {ls[0], ls[1], ls[2]};
            }
            s.raw_opacity = j.at("raw_opacity").get<double>();
            s.color = read_array<3>(j.at("color"), "color");
            if (scene.mode == SceneMode::projected3d_curve3d) {
                for (const auto &p : j.at("c3d_curve")) {
                    const auto a = read_array<3>(p, "c3d_curve");
                    s.c3d_curve.push_back({a[0], a[1], a[2]});
                }
            } else {
                for (const auto &p : j.at("c_curve")) {
                    const auto a = read_array<2>(p, "c_curve");
                    s.c_curve.push_back({a[0], a[1]});
                }
            }
            s.depth_key = j.at("depth_key").get<double>();
            scene.splats.push_back(std::move(s));
        }
        validate(scene);
        return scene;
    } catch (const json::exception &e) {
        throw SceneError(std::string("scene: ") + e.what());
    }
}

void write_scene(const Scene &scene, const std::filesystem::path &path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw SceneError("cannot write scene file " + path.string());
    out << scene_to_json(scene);
}

Scene read_scene(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SceneError("cannot read scene file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return scene_from_json(ss.str());
}

} // namespace discsplat
