// Copyright Contributors to the DiscSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace discsplat {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    double &operator[](int i) { return i == 0 ? x : y; }
    double operator[](int i) const { return i == 0 ? x : y; }

    friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
    friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
    friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
    friend bool operator==(const Vec2 &, const Vec2 &) = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    double &operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
    double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
    friend bool operator==(const Vec3 &, const Vec3 &) = default;
};

/// Symmetric 2x2 matrix [[xx, xy], [xy, yy]].
struct Sym2 {
    double xx = 0.0;
    double xy = 0.0;
    double yy = 0.0;

    double det() const { return xx * yy - xy * xy; }
    Sym2 inverse() const {
        const double inv_det = 1.0 / det();
        return {yy * inv_det, -xy * inv_det, xx * inv_det};
    }
};

using Rgb = std::array<double, 3>;

/// Interleaved RGB image with values nominally in [0, 1].
class Image {
public:
    Image() = default;
    Image(int width, int height, Rgb fill = {0.0, 0.0, 0.0})
        : width_(width), height_(height), data_(static_cast<std::size_t>(width) * height * 3) {
        if (width < 0 || height < 0) {
            throw std::invalid_argument("image dimensions must be non-negative");
        }
        for (std::size_t i = 0; i < data_.size(); i += 3) {
            data_[i] = fill[0];
            data_[i + 1] = fill[1];
            data_[i + 2] = fill[2];
        }
    }

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }

    double &at(int x, int y, int c) { return data_[(static_cast<std::size_t>(y) * width_ + x) * 3 + c]; }
    double at(int x, int y, int c) const {
        return data_[(static_cast<std::size_t>(y) * width_ + x) * 3 + c];
    }

    std::vector<double> &data() { return data_; }
    const std::vector<double> &data() const { return data_; }

    bool same_shape(const Image &other) const {
        return width_ == other.width_ && height_ == other.height_;
    }

    friend bool operator==(const Image &, const Image &) = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<double> data_;
};

/// Raised when two images (or an image and a gradient buffer) disagree in size.
class ShapeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace discsplat
