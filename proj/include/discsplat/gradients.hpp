// Copyright Contributors to the DiscSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "discsplat/bezier.hpp"
#include "discsplat/projection.hpp"
#include "discsplat/rasterizer.hpp"
#include "discsplat/scene.hpp"
#include "discsplat/types.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace discsplat {

/// Gradient of a scalar loss with respect to one splat's parameters.
/// d_quat is filled in the 3D modes, d_theta in flat2d.
struct SplatGradient {
    Vec3 d_center{};
    double d_theta = 0.0;
    Quat d_quat{0.0, 0.0, 0.0, 0.0};
    Vec3 d_log_scales{};
    double d_raw_opacity = 0.0;
    Rgb d_color{};
    std::vector<Vec2> d_c_curve;
    std::vector<Vec3> d_c3d_curve;
};

struct GradientBuffer {
    std::vector<SplatGradient> splats;
};

/// Image-plane gradients of one prepared splat.
struct ImageSpaceGradient {
    Vec2 d_mu2d{};
    /// Derivative with respect to the three distinct entries (xx, xy, yy) of
    /// the inverse covariance; the off-diagonal counts both of its positions.
    Sym2 d_inv_cov{};
    double d_alpha = 0.0;
    Rgb d_color{};
    std::vector<Vec2> d_points; // 4M image-plane control points
};

enum class SkipDecision { skip_optimal, skip_at_min, skip_at_max, proceed };

/// Pure function of the upstream derivative and the current single-curve value.
SkipDecision classify_skip(double delta, int g_sc);

inline constexpr double kCurveGradEpsilon = 1e-5;

/// Interpolated derivative of the single-curve indicator with respect to a
/// control coordinate whose value is `current`.
double approx_curve_grad(const CrossingSolutions &crossing, double current, int g_sc);

namespace detail {
double approx_curve_grad(const NearestCrossing &nearest, double current, int g_sc);
}

struct BlendGradient {
    Rgb d_color{};
    double d_beta = 0.0;
};

/// Reverse of one pixel's front-to-back blend. Inputs are in blend order.
void backward_blend_pixel(std::span<const Rgb> colors, std::span<const double> betas,
                          std::span<const double> transmittances, const Rgb &background, const Rgb &d_pixel,
                          std::span<BlendGradient> out);

/// Per tile, one BlendGradient per tape record (same indexing as TileTape::records).
std::vector<std::vector<BlendGradient>> backward_blend(const RenderTape &tape,
                                                       const std::vector<ProjectedSplat> &prepared,
                                                       const Image &d_image);

struct GaussianGradient {
    Vec2 d_mu2d{};
    Sym2 d_inv_cov{};
    double d_alpha = 0.0;
    /// Upstream derivative of each single-curve indicator.
    std::array<double, kMaxCurves> delta{};
};

/// Chain rule through beta = alpha * g * exp(power) at one pixel center.
GaussianGradient backward_gaussian(const ProjectedSplat &splat, const TapeRecord &record, Vec2 pixel,
                                   double d_beta, int num_curves);

struct CurveStats {
    std::uint64_t skip_optimal = 0;
    std::uint64_t skip_at_min = 0;
    std::uint64_t skip_at_max = 0;
    std::uint64_t proceed = 0;
    std::uint64_t empty_coordinates = 0;
    double max_abs_grad = 0.0;

    void merge(const CurveStats &o);
};

/// Adds delta_k * dg/dphi for every control coordinate of every curve that
/// is not skipped at this pixel. `d_points` has 4M entries.
void backward_curves(const ProjectedSplat &splat, Vec2 pixel, std::uint32_t gbits,
                     std::span<const double> delta, std::span<Vec2> d_points, CurveStats *stats = nullptr);

struct BackwardOptions {
    bool curve_gradients = true;
};

struct BackwardResult {
    std::vector<ImageSpaceGradient> image_space; // indexed like `prepared`
    GradientBuffer grads;                       // indexed like scene.splats
    CurveStats curve_stats;
};

class TapeMismatchError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Image-plane gradients of every prepared splat. Tile-parallel, reduced in
/// tile order so the result does not depend on the thread count.
std::vector<ImageSpaceGradient> backward_image_space(const RenderTape &tape,
                                                     const std::vector<ProjectedSplat> &prepared,
                                                     const Image &d_image, const BackwardOptions &options = {},
                                                     CurveStats *stats = nullptr);

/// Maps image-plane gradients back to scene parameters. Curve gradients stop
/// at the local frame: they never reach center, theta or rotation.
GradientBuffer pullback(const Scene &scene, const Camera *cam, const std::vector<ProjectedSplat> &prepared,
                        const std::vector<ImageSpaceGradient> &image_space, const RasterConfig &config = {});

BackwardResult backward(const Scene &scene, const Camera *cam, const std::vector<ProjectedSplat> &prepared,
                        const RenderTape &tape, const Image &d_image, const RasterConfig &config = {},
                        const BackwardOptions &options = {});

} // namespace discsplat
