// Copyright Contributors to the DiscSplat Project
// SPDX-License-Identifier: Apache-2.0

#include "discsplat/projection.hpp"

#include <Eigen/Geometry>
#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace discsplat {

using nlohmann::json;

Eigen::Vector3d Camera::to_camera(const Vec3 &world) const {
    const Eigen::Vector4d h = view * Eigen::Vector4d(world.x, world.y, world.z, 1.0);
    return h.head<3>();
}

void validate(const Camera &cam) {
    const Eigen::Matrix3d r = cam.view.topLeftCorner<3, 3>();
    if ((r * r.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-9) {
        throw CameraError("camera: view rotation block is not orthonormal");
    }
    if (cam.view.row(3).transpose() != Eigen::Vector4d(0, 0, 0, 1)) {
        throw CameraError("camera: view matrix last row must be 0 0 0 1");
    }
    if (!(cam.fx > 0.0) || !(cam.fy > 0.0)) throw CameraError("camera: focal lengths must be positive");
    if (!(cam.near > 0.0)) throw CameraError("camera: near plane must be positive");
    if (cam.width <= 0 || cam.height <= 0) throw CameraError("camera: image size must be positive");
}

Camera camera_from_json(std::string_view text) {
    try {
        const json j = json::parse(text);
        Camera cam;
        const auto &v = j.at("view");
        if (!v.is_array() || v.size() != 16) throw CameraError("camera: view must have 16 numbers");
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c) cam.view(r, c) = v[4 * r + c].get<double>();
        cam.fx = j.at("fx").get<double>();
        cam.fy = j.at("fy").get<double>();
        cam.cx = j.at("cx").get<double>();
        cam.cy = j.at("cy").get<double>();
        cam.width = j.at("width").get<int>();
        cam.height = j.at("height").get<int>();
        cam.near = j.at("near").get<double>();
        validate(cam);
        return cam;
    } catch (const json::exception &e) {
        throw CameraError(std::string("camera: ") + e.what());
    }
}

std::string camera_to_json(const Camera &cam) {
    json j;
    json v = json::array();
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) v.push_back(cam.view(r, c));
    j["view"] = v;
    j["fx"] = cam.fx;
    j["fy"] = cam.fy;
    j["cx"] = cam.cx;
    j["cy"] = cam.cy;
    j["width"] = cam.width;
    j["height"] = cam.height;
    j["near"] = cam.near;
    return j.dump(1) + "\n";
}

Camera read_camera(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CameraError("cannot read camera file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return camera_from_json(ss.str());
}

Eigen::Matrix3d rotation_matrix(const Quat &q) {
    return Eigen::Quaterniond(q.w, q.x, q.y, q.z).normalized().toRotationMatrix();
}

Eigen::Matrix3d covariance_3d(const Splat &splat) {
    const Eigen::Matrix3d r = rotation_matrix(splat.rotation);
    const Eigen::Vector3d s(std::exp(splat.log_scales.x), std::exp(splat.log_scales.y), std::exp(splat.log_scales.z));
    const Eigen::Matrix3d rs = r * s.asDiagonal();
    return rs * rs.transpose();
}

Eigen::Matrix<double, 2, 3> perspective_jacobian(const Camera &cam, const Eigen::Vector3d &t) {
    const double inv_z = 1.0 / t.z();
    Eigen::Matrix<double, 2, 3> j;
    j << cam.fx * inv_z, 0.0, -cam.fx * t.x() * inv_z * inv_z, //
        0.0, cam.fy * inv_z, -cam.fy * t.y() * inv_z * inv_z;
    return j;
}

std::optional<ProjectedGaussian> project_gaussian(const Splat &splat, const Camera &cam) {
    const Eigen::Vector3d t = cam.to_camera(splat.center);
    if (!(t.z() > cam.near)) return std::nullopt;
    const Eigen::Matrix3d w = cam.view.topLeftCorner<3, 3>();
    const Eigen::Matrix<double, 2, 3> jw = perspective_jacobian(cam, t) * w;
    const Eigen::Matrix2d cov = jw * covariance_3d(splat) * jw.transpose();

    ProjectedGaussian out;
    out.mean = {cam.fx * t.x() / t.z() + cam.cx, cam.fy * t.y() / t.z() + cam.cy};
    out.cov = {cov(0, 0), 0.5 * (cov(0, 1) + cov(1, 0)), cov(1, 1)};
    out.depth = t.z();
    return out;
}

std::vector<Vec3> lift_control_points(const Splat &splat) {
    const Eigen::Matrix3d r = rotation_matrix(splat.rotation);
    const Eigen::Vector3d mu(splat.center.x, splat.center.y, splat.center.z);
    std::vector<Vec3> out;
    out.reserve(splat.c_curve.size());
    for (const auto &c : splat.c_curve) {
        const Eigen::Vector3d p = mu + c.x * r.col(0) + c.y * r.col(1);
        out.push_back({p.x(), p.y(), p.z()});
    }
    return out;
}

std::optional<std::vector<Vec2>> project_control_points(std::span<const Vec3> points, const Camera &cam) {
    std::vector<Vec2> out;
    out.reserve(points.size());
    for (const auto &p : points) {
        const Eigen::Vector3d t = cam.to_camera(p);
        if (!(t.z() > cam.near)) return std::nullopt;
        out.push_back({cam.fx * t.x() / t.z() + cam.cx, cam.fy * t.y() / t.z() + cam.cy});
    }
    return out;
}

} // namespace discsplat
