// Copyright Contributors to the DiscSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "discsplat/types.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace discsplat {

enum class SceneMode { flat2d, projected3d, projected3d_curve3d };

std::string_view to_string(SceneMode mode);
SceneMode scene_mode_from_string(std::string_view name);

/// Unit quaternion (w, x, y, z).
struct Quat {
    double w = 1.0;
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
    friend bool operator==(const Quat &, const Quat &) = default;
};

/// One Gaussian with its scissor curves. Only the fields of the owning
/// scene's mode are meaningful: flat2d uses center.xy, theta, log_scales.xy
/// and c_curve; the 3D modes use center, rotation, log_scales and either
/// c_curve (local frame) or c3d_curve (world space).
struct Splat {
    Vec3 center{};
    double theta = 0.0;
    Quat rotation{};
    Vec3 log_scales{};
    double raw_opacity = 0.0;
    Rgb color{0.5, 0.5, 0.5};
    std::vector<Vec2> c_curve;
    std::vector<Vec3> c3d_curve;
    double depth_key = 0.0;

    double opacity() const;
    Vec2 center2d() const { return {center.x, center.y}; }
    double scale(int axis) const;

    friend bool operator==(const Splat &, const Splat &) = default;
};

struct Scene {
    std::vector<Splat> splats;
    int M = 3;
    SceneMode mode = SceneMode::flat2d;
    Rgb background{0.0, 0.0, 0.0};

    friend bool operator==(const Scene &, const Scene &) = default;
};

class SceneError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

double sigmoid(double x);
double logit(double p);

/// Columns r1, r2 of the 2D rotation R(theta).
std::array<Vec2, 2> rotation_columns(double theta);

/// R(theta) diag(s1^2, s2^2) R(theta)^T of a flat2d splat.
Sym2 covariance_2x2(const Splat &splat);

/// center + c_curve[i].x r1 + c_curve[i].y r2 for every control point (flat2d).
std::vector<Vec2> curve_points_to_image(const Splat &splat);

/// Local control points of M scissor curves that leave the whole support of
/// a splat with the given largest scale uncut.
std::vector<Vec2> non_cutting_curves(double max_scale, int M);

/// Jittered-grid initialization of a flat2d scene. Colors are sampled from
/// `target` at each center when given, else mid-gray.
Scene init_scene(int width, int height, int n, int M, std::uint64_t seed, const Image *target = nullptr);

/// Throws SceneError on any violated invariant.
void validate(const Scene &scene);

std::string scene_to_json(const Scene &scene);
Scene scene_from_json(std::string_view text);
void write_scene(const Scene &scene, const std::filesystem::path &path);
Scene read_scene(const std::filesystem::path &path);

inline constexpr int kMaxCurves = 16;

} // namespace discsplat
