// Copyright Contributors to the DiscSplat Project
// SPDX-License-Identifier: Apache-2.0

#include "discsplat/rasterizer.hpp"

#include "discsplat/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace discsplat {

ImplicitCubic non_scissoring_curve() {
    ImplicitCubic imp;
    imp.gamma[k0] = 1.0;
    return imp;
}

PixelRect footprint_bounds(Vec2 mu, const Sym2 &cov, double alpha, double cutoff, int width, int height) {
    PixelRect r;
    if (!(alpha >= cutoff)) return r;
    // alpha exp(-m^2 / 2) >= cutoff  <=>  m^2 <= 2 ln(alpha / cutoff)
    const double m = std::sqrt(2.0 * std::log(alpha / cutoff)) + 1e-6;
    const double ex = m * std::sqrt(cov.xx);
    const double ey = m * std::sqrt(cov.yy);
    // pixel centers sit at i + 0.5
    r.x0 = std::max(0, static_cast<int>(std::ceil(mu.x - ex - 0.5)));
    r.x1 = std::min(width, static_cast<int>(std::floor(mu.x + ex - 0.5)) + 1);
    r.y0 = std::max(0, static_cast<int>(std::ceil(mu.y - ey - 0.5)));
    r.y1 = std::min(height, static_cast<int>(std::floor(mu.y + ey - 0.5)) + 1);
    if (r.empty()) r = {};
    return r;
}

namespace {

std::vector<ImplicitCubic> implicit_curves(std::span<const Vec2> points) {
    std::vector<ImplicitCubic> out;
    out.reserve(points.size() / 4);
    for (std::size_t k = 0; k + 3 < points.size(); k += 4) {
        CubicBezier c{{points[k], points[k + 1], points[k + 2], points[k + 3]}};
        try {
            out.push_back(implicitize(c));
        } catch (const DegenerateCurveError &) {
            out.push_back(non_scissoring_curve());
        }
    }
    return out;
}

void finish(ProjectedSplat &ps, const Sym2 &cov, const RasterConfig &config, int width, int height) {
    ps.cov2d = {cov.xx + config.cov_regularization, cov.xy, cov.yy + config.cov_regularization};
    ps.inv_cov2d = ps.cov2d.inverse();
    ps.curves = implicit_curves(ps.curve_points);
    ps.bbox = footprint_bounds(ps.mu2d, ps.cov2d, ps.alpha, config.min_contribution, width, height);
}

} // namespace

std::vector<ProjectedSplat> prepare(const Scene &scene, const Camera *cam, int width, int height,
                                    const RasterConfig &config) {
    std::vector<ProjectedSplat> out;
    out.reserve(scene.splats.size());
    if (scene.mode == SceneMode::flat2d) {
        for (std::size_t i = 0; i < scene.splats.size(); ++i) {
            const Splat &s = scene.splats[i];
            ProjectedSplat ps;
            ps.source = static_cast<std::uint32_t>(i);
            ps.mu2d = s.center2d();
            ps.color = s.color;
            ps.alpha = s.opacity();
            ps.curve_points = curve_points_to_image(s);
            ps.depth_key = s.depth_key;
            finish(ps, covariance_2x2(s), config, width, height);
            out.push_back(std::move(ps));
        }
    } else {
        if (!cam) throw SceneError("prepare: 3D scenes need a camera");
        for (std::size_t i = 0; i < scene.splats.size(); ++i) {
            const Splat &s = scene.splats[i];
            const auto proj = project_gaussian(s, *cam);
            if (!proj) continue;
            const std::vector<Vec3> lifted =
                scene.mode == SceneMode::projected3d ? lift_control_points(s) : s.c3d_curve;
            auto points = project_control_points(lifted, *cam);
            if (!points) continue;
            ProjectedSplat ps;
            ps.source = static_cast<std::uint32_t>(i);
            ps.mu2d = proj->mean;
            ps.color = s.color;
            ps.alpha = s.opacity();
            ps.curve_points = std::move(*points);
            ps.depth_key = proj->depth;
            finish(ps, proj->cov, config, width, height);
            out.push_back(std::move(ps));
        }
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const ProjectedSplat &a, const ProjectedSplat &b) { return a.depth_key < b.depth_key; });
    return out;
}

const TileTape &RenderTape::tile_of(int x, int y) const {
    return tiles[static_cast<std::size_t>(y / tile_size) * tiles_x + x / tile_size];
}

std::vector<TapeRecord> RenderTape::contributors(int x, int y) const {
    const TileTape &tile = tile_of(x, y);
    std::vector<TapeRecord> out;
    for (std::int32_t r = tile.last[local_index(tile, x, y)]; r >= 0; r = tile.records[r].prev) {
        out.push_back(tile.records[r]);
    }
    std::reverse(out.begin(), out.end());
    return out;
}

double RenderTape::final_transmittance(int x, int y) const {
    const TileTape &tile = tile_of(x, y);
    return tile.final_transmittance[local_index(tile, x, y)];
}

namespace {

void render_tile(const std::vector<ProjectedSplat> &prepared, TileTape &tile, Image &image, const Rgb &background,
                 const RasterConfig &config, int num_curves) {
    const PixelRect &rect = tile.rect;
    const int tw = rect.x1 - rect.x0;
    const int th = rect.y1 - rect.y0;
    const int n = tw * th;
    const std::uint32_t all_kept = full_mask(num_curves);

    std::vector<double> accum(static_cast<std::size_t>(n) * 3, 0.0);
    std::vector<double> trans(n, 1.0);
    std::vector<unsigned char> done(n, 0);
    tile.last.assign(n, -1);
    int remaining = n;

    std::vector<double> gauss(tw);
    std::vector<std::uint32_t> gbits(tw);
    std::vector<RowPoly> rows(num_curves);
    const simd::RowKernelFn kernel = simd::row_kernel();
    const std::span<const RowPoly> no_curves;

    for (std::uint32_t slot = 0; slot < tile.bin.size() && remaining > 0; ++slot) {
        const std::uint32_t idx = tile.bin[slot];
        const ProjectedSplat &ps = prepared[idx];
        const int x0 = std::max(rect.x0, ps.bbox.x0);
        const int x1 = std::min(rect.x1, ps.bbox.x1);
        const int y0 = std::max(rect.y0, ps.bbox.y0);
        const int y1 = std::min(rect.y1, ps.bbox.y1);
        if (x0 >= x1 || y0 >= y1) continue;
        const simd::FootprintParams fp = ps.footprint();
        const int count = x1 - x0;
        for (int y = y0; y < y1; ++y) {
            const double py = y + 0.5;
            std::span<const RowPoly> curve_rows = no_curves;
            if (config.curves_enabled) {
                for (int k = 0; k < num_curves; ++k) rows[k] = ps.curves[k].row(py);
                curve_rows = rows;
            }
            kernel(fp, curve_rows, x0 + 0.5, py, count, gauss.data(), gbits.data());
            for (int i = 0; i < count; ++i) {
                const int p = (y - rect.y0) * tw + (x0 + i - rect.x0);
                if (done[p]) continue;
                const double w = ps.alpha * gauss[i];
                if (w < config.min_contribution) continue;
                const std::uint32_t bits = config.curves_enabled ? gbits[i] : all_kept;
                const double beta = bits == all_kept ? w : 0.0;
                const double t = trans[p];

                TapeRecord rec;
                rec.splat = idx;
                rec.slot = slot;
                rec.gbits = bits;
                rec.prev = tile.last[p];
                rec.gauss = gauss[i];
                rec.beta = beta;
                rec.transmittance = t;
                tile.last[p] = static_cast<std::int32_t>(tile.records.size());
                tile.records.push_back(rec);

                for (int c = 0; c < 3; ++c) accum[3 * p + c] += (ps.color[c] * beta) * t;
                trans[p] = t * (1.0 - beta);
                if (trans[p] < config.min_transmittance) {
                    done[p] = 1;
                    --remaining;
                }
            }
        }
    }

    tile.final_transmittance = trans;
    for (int y = rect.y0; y < rect.y1; ++y) {
        for (int x = rect.x0; x < rect.x1; ++x) {
            const int p = (y - rect.y0) * tw + (x - rect.x0);
            for (int c = 0; c < 3; ++c) image.at(x, y, c) = accum[3 * p + c] + trans[p] * background[c];
        }
    }
}

} // namespace

RenderTape render(const std::vector<ProjectedSplat> &prepared, int width, int height, const Rgb &background,
                  const RasterConfig &config) {
    RenderTape tape;
    tape.width = width;
    tape.height = height;
    tape.tile_size = config.tile_size;
    tape.splat_count = prepared.size();
    tape.curves_enabled = config.curves_enabled;
    tape.background = background;
    tape.num_curves = prepared.empty() ? 0 : static_cast<int>(prepared.front().curves.size());
    tape.image = Image(width, height);

    const int ts = config.tile_size;
    tape.tiles_x = (width + ts - 1) / ts;
    const int tiles_y = (height + ts - 1) / ts;
    tape.tiles.resize(static_cast<std::size_t>(tape.tiles_x) * tiles_y);
    for (int ty = 0; ty < tiles_y; ++ty) {
        for (int tx = 0; tx < tape.tiles_x; ++tx) {
            auto &t = tape.tiles[static_cast<std::size_t>(ty) * tape.tiles_x + tx];
            t.rect = {tx * ts, ty * ts, std::min(width, (tx + 1) * ts), std::min(height, (ty + 1) * ts)};
        }
    }
    for (std::uint32_t i = 0; i < prepared.size(); ++i) {
        const PixelRect &b = prepared[i].bbox;
        if (b.empty()) continue;
        for (int ty = b.y0 / ts; ty <= (b.y1 - 1) / ts; ++ty) {
            for (int tx = b.x0 / ts; tx <= (b.x1 - 1) / ts; ++tx) {
                tape.tiles[static_cast<std::size_t>(ty) * tape.tiles_x + tx].bin.push_back(i);
            }
        }
    }

    parallel_for(tape.tiles.size(), [&](std::size_t t) {
        render_tile(prepared, tape.tiles[t], tape.image, background, config, tape.num_curves);
    });
    return tape;
}

RenderTape render_scene(const Scene &scene, int width, int height, const RasterConfig &config, const Camera *cam) {
    return render(prepare(scene, cam, width, height, config), width, height, scene.background, config);
}

} // namespace discsplat
