// Copyright Contributors to the DiscSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "discsplat/bezier.hpp"
#include "discsplat/projection.hpp"
#include "discsplat/scene.hpp"
#include "discsplat/simd/kernels.hpp"
#include "discsplat/types.hpp"

#include <cstdint>
#include <vector>

namespace discsplat {

struct RasterConfig {
    int tile_size = 16;
    /// Candidates whose unscissored weight alpha * G falls below this are skipped.
    double min_contribution = 1.0 / 255.0;
    /// A pixel stops accumulating once its transmittance drops below this.
    double min_transmittance = 1e-4;
    /// Added to both diagonal entries of the image-plane covariance (pixel^2).
    double cov_regularization = 0.1;
    /// When false every indicator is taken as 1 (plain splatting).
    bool curves_enabled = true;
};

/// Half-open pixel rectangle [x0, x1) x [y0, y1).
struct PixelRect {
    int x0 = 0;
    int y0 = 0;
    int x1 = 0;
    int y1 = 0;
    bool empty() const { return x0 >= x1 || y0 >= y1; }
};

struct ProjectedSplat {
    std::uint32_t source = 0; // index into Scene::splats
    Vec2 mu2d;
    Sym2 cov2d;     // regularized
    Sym2 inv_cov2d; // inverse of cov2d
    Rgb color{};
    double alpha = 0.0;
    std::vector<Vec2> curve_points; // 4M image-plane control points
    std::vector<ImplicitCubic> curves;
    double depth_key = 0.0;
    PixelRect bbox;

    simd::FootprintParams footprint() const {
        return {mu2d.x, mu2d.y, inv_cov2d.xx, inv_cov2d.xy, inv_cov2d.yy};
    }
};

/// Implicit form used for a curve whose control points all coincide: it
/// never scissors anything.
ImplicitCubic non_scissoring_curve();

/// Transforms a scene into depth-ordered image-plane splats (front first).
/// flat2d scenes ignore `cam`; 3D modes require it and cull splats whose
/// center or any control point is not in front of the near plane.
std::vector<ProjectedSplat> prepare(const Scene &scene, const Camera *cam, int width, int height,
                                    const RasterConfig &config = {});

/// Pixel rectangle holding every pixel center where alpha * G >= cutoff.
PixelRect footprint_bounds(Vec2 mu, const Sym2 &cov, double alpha, double cutoff, int width, int height);

struct TapeRecord {
    std::uint32_t splat = 0; // index into the prepared list
    std::uint32_t slot = 0;  // index into the owning tile's bin
    std::uint32_t gbits = 0; // bit k: single-curve indicator of curve k
    std::int32_t prev = -1;  // previous record of the same pixel (front-to-back)
    double gauss = 0.0;      // exp(-0.5 d^T inv d)
    double beta = 0.0;       // alpha * g * gauss
    double transmittance = 0.0; // T before this contributor
};

struct TileTape {
    PixelRect rect;
    std::vector<std::uint32_t> bin; // prepared indices overlapping the tile, in depth order
    std::vector<TapeRecord> records;
    std::vector<std::int32_t> last;      // per pixel: index of its last record, -1 if none
    std::vector<double> final_transmittance;
};

/// Everything the backward pass needs, recorded by render().
struct RenderTape {
    int width = 0;
    int height = 0;
    int tile_size = 16;
    int tiles_x = 0;
    int num_curves = 0;
    std::size_t splat_count = 0;
    bool curves_enabled = true;
    Rgb background{};
    Image image;
    std::vector<TileTape> tiles;

    const TileTape &tile_of(int x, int y) const;
    int local_index(const TileTape &tile, int x, int y) const {
        return (y - tile.rect.y0) * (tile.rect.x1 - tile.rect.x0) + (x - tile.rect.x0);
    }
    /// Records of one pixel in front-to-back order.
    std::vector<TapeRecord> contributors(int x, int y) const;
    double final_transmittance(int x, int y) const;
};

inline std::uint32_t full_mask(int num_curves) {
    return num_curves >= 32 ? 0xffffffffu : ((1u << num_curves) - 1u);
}

/// Front-to-back discontinuity-aware blending of depth-sorted splats.
RenderTape render(const std::vector<ProjectedSplat> &prepared, int width, int height, const Rgb &background,
                  const RasterConfig &config = {});

/// prepare + render, discarding nothing.
RenderTape render_scene(const Scene &scene, int width, int height, const RasterConfig &config = {},
                        const Camera *cam = nullptr);

} // namespace discsplat
