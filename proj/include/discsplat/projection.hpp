// Copyright Contributors to the DiscSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "discsplat/scene.hpp"
#include "discsplat/types.hpp"

#include <Eigen/Core>

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace discsplat {

/// Pinhole camera: world-to-camera rigid transform plus intrinsics.
struct Camera {
    Eigen::Matrix4d view = Eigen::Matrix4d::Identity();
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 0;
    int height = 0;
    double near = 0.01;

    Eigen::Vector3d to_camera(const Vec3 &world) const;
};

class CameraError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Throws CameraError unless the rotation block is orthonormal (1e-9),
/// the focal lengths are positive and near > 0.
void validate(const Camera &cam);

Camera camera_from_json(std::string_view text);
std::string camera_to_json(const Camera &cam);
Camera read_camera(const std::filesystem::path &path);

struct ProjectedGaussian {
    Vec2 mean;
    Sym2 cov;
    double depth = 0.0;
};

/// 3x3 rotation of a (normalized) quaternion.
Eigen::Matrix3d rotation_matrix(const Quat &q);

/// R S S^T R^T of a 3D splat.
Eigen::Matrix3d covariance_3d(const Splat &splat);

/// 2x3 Jacobian of the perspective map at camera-space point t.
Eigen::Matrix<double, 2, 3> perspective_jacobian(const Camera &cam, const Eigen::Vector3d &t);

/// EWA projection of center and covariance. Empty when the center is not
/// in front of the near plane (culled).
std::optional<ProjectedGaussian> project_gaussian(const Splat &splat, const Camera &cam);

/// mu + c_curve[i].x r1 + c_curve[i].y r2 with r1, r2 the first two rotation columns.
std::vector<Vec3> lift_control_points(const Splat &splat);

/// Exact perspective projection of each point; empty if any point is not in
/// front of the near plane (the owning splat is culled).
std::optional<std::vector<Vec2>> project_control_points(std::span<const Vec3> points, const Camera &cam);

} // namespace discsplat
