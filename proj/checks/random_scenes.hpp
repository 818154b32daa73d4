// Copyright Contributors to the DiscSplat Project
// SPDX-License-Identifier: Apache-2.0

// Random scene builders shared by the tests and the check harnesses.

#pragma once

#include "discsplat/scene.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace discsplat::checks {

struct RandomSceneOptions {
    int width = 32;
    int height = 32;
    int splats = 8;
    int M = 3;
    double min_scale = 1.5;
    double max_scale = 6.0;
    /// Curves pass close to the splat center instead of staying outside its support.
    bool cutting = false;
};

/// Local control points of one curve crossing the neighbourhood of the origin.
inline void cutting_curve(std::mt19937_64 &rng, double reach, std::vector<Vec2> &out) {
    std::uniform_real_distribution<double> u(-1.0, 1.0), ang(0.0, 6.283185307179586);
    const double a = ang(rng);
    const Vec2 dir{std::cos(a), std::sin(a)};
    const Vec2 normal{-dir.y, dir.x};
    const double offset = 0.6 * reach * u(rng);
    for (int i = 0; i < 4; ++i) {
        const double along = reach * (-1.5 + i);
        const double bow = 0.4 * reach * u(rng);
        out.push_back(along * dir + (offset + bow) * normal);
    }
}

inline Scene random_scene(std::mt19937_64 &rng, const RandomSceneOptions &o) {
    std::uniform_real_distribution<double> ux(0.0, o.width), uy(0.0, o.height), th(0.0, 3.141592653589793),
        ls(std::log(o.min_scale), std::log(o.max_scale)), col(0.0, 1.0), op(-1.5, 2.5);
    Scene scene;
    scene.M = o.M;
    scene.background = {col(rng), col(rng), col(rng)};
    for (int i = 0; i < o.splats; ++i) {
        Splat s;
        s.center = {ux(rng), uy(rng), 0.0};
        s.theta = th(rng);
        s.log_scales = {ls(rng), ls(rng), 0.0};
        s.raw_opacity = op(rng);
        s.color = {col(rng), col(rng), col(rng)};
        const double big = std::max(s.scale(0), s.scale(1));
        if (o.cutting) {
            for (int k = 0; k < o.M; ++k) cutting_curve(rng, big, s.c_curve);
        } else {
            s.c_curve = non_cutting_curves(big, o.M);
        }
        s.depth_key = i;
        scene.splats.push_back(std::move(s));
    }
    return scene;
}

} // namespace discsplat::checks
