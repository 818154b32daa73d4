// Copyright Contributors to the DiscSplat Project
// SPDX-License-Identifier: Apache-2.0

#include "discsplat/gradients.hpp"

#include "discsplat/parallel.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>

namespace discsplat {

SkipDecision classify_skip(double delta, int g_sc) {
    if (delta == 0.0) return SkipDecision::skip_optimal;
    if (delta > 0.0 && g_sc == 0) return SkipDecision::skip_at_min;
    if (delta < 0.0 && g_sc != 0) return SkipDecision::skip_at_max;
    return SkipDecision::proceed;
}

namespace detail {

double approx_curve_grad(const NearestCrossing &nearest, double current, int g_sc) {
    const double g = g_sc != 0 ? 1.0 : 0.0;
    const double flipped = 1.0 - g;
    double out = 0.0;
    if (nearest.has_left) out += (flipped - g) / ((nearest.left - current) - kCurveGradEpsilon);
    if (nearest.has_right) out += (flipped - g) / ((nearest.right - current) + kCurveGradEpsilon);
    return out;
}

} // namespace detail

double approx_curve_grad(const CrossingSolutions &crossing, double current, int g_sc) {
    detail::NearestCrossing n;
    if (crossing.nearest_left) {
        n.has_left = true;
        n.left = *crossing.nearest_left;
    }
    if (crossing.nearest_right) {
        n.has_right = true;
        n.right = *crossing.nearest_right;
    }
    return detail::approx_curve_grad(n, current, g_sc);
}

void CurveStats::merge(const CurveStats &o) {
    skip_optimal += o.skip_optimal;
    skip_at_min += o.skip_at_min;
    skip_at_max += o.skip_at_max;
    proceed += o.proceed;
    empty_coordinates += o.empty_coordinates;
    max_abs_grad = std::max(max_abs_grad, o.max_abs_grad);
}

void backward_blend_pixel(std::span<const Rgb> colors, std::span<const double> betas,
                          std::span<const double> transmittances, const Rgb &background, const Rgb &d_pixel,
                          std::span<BlendGradient> out) {
    Rgb behind = background;
    for (std::size_t i = colors.size(); i-- > 0;) {
        const double beta = betas[i];
        const double t = transmittances[i];
        double d_beta = 0.0;
        for (int c = 0; c < 3; ++c) {
            out[i].d_color[c] = d_pixel[c] * beta * t;
            d_beta += d_pixel[c] * (colors[i][c] - behind[c]);
            behind[c] = colors[i][c] * beta + (1.0 - beta) * behind[c];
        }
        out[i].d_beta = d_beta * t;
    }
}

namespace {

void check_shapes(const RenderTape &tape, const std::vector<ProjectedSplat> &prepared, const Image &d_image) {
    if (tape.splat_count != prepared.size()) {
        throw TapeMismatchError("backward: tape was recorded for a different splat list");
    }
    if (d_image.width() != tape.width || d_image.height() != tape.height) {
        throw ShapeError("backward: gradient image does not match the render size");
    }
}

// Walks one pixel's records back to front, calling fn(record_index, d_color, d_beta).
template <class Fn>
void reverse_pixel(const TileTape &tile, int local, const std::vector<ProjectedSplat> &prepared, const Rgb &bg,
                   const Rgb &d_pixel, Fn &&fn) {
    Rgb behind = bg;
    for (std::int32_t r = tile.last[local]; r >= 0; r = tile.records[r].prev) {
        const TapeRecord &rec = tile.records[r];
        const Rgb &color = prepared[rec.splat].color;
        Rgb d_color;
        double d_beta = 0.0;
        for (int c = 0; c < 3; ++c) {
            d_color[c] = d_pixel[c] * rec.beta * rec.transmittance;
            d_beta += d_pixel[c] * (color[c] - behind[c]);
            behind[c] = color[c] * rec.beta + (1.0 - rec.beta) * behind[c];
        }
        fn(r, d_color, d_beta * rec.transmittance);
    }
}

} // namespace

std::vector<std::vector<BlendGradient>> backward_blend(const RenderTape &tape,
                                                       const std::vector<ProjectedSplat> &prepared,
                                                       const Image &d_image) {
    check_shapes(tape, prepared, d_image);
    std::vector<std::vector<BlendGradient>> out(tape.tiles.size());
    parallel_for(tape.tiles.size(), [&](std::size_t t) {
        const TileTape &tile = tape.tiles[t];
        out[t].resize(tile.records.size());
        for (int y = tile.rect.y0; y < tile.rect.y1; ++y) {
            for (int x = tile.rect.x0; x < tile.rect.x1; ++x) {
                const Rgb d_pixel{d_image.at(x, y, 0), d_image.at(x, y, 1), d_image.at(x, y, 2)};
                reverse_pixel(tile, tape.local_index(tile, x, y), prepared, tape.background, d_pixel,
                              [&](std::int32_t r, const Rgb &d_color, double d_beta) {
                                  out[t][r] = {d_color, d_beta};
                              });
            }
        }
    });
    return out;
}

GaussianGradient backward_gaussian(const ProjectedSplat &splat, const TapeRecord &record, Vec2 pixel,
                                   double d_beta, int num_curves) {
    GaussianGradient out;
    const std::uint32_t all = full_mask(num_curves);
    const std::uint32_t zeros = all & ~record.gbits;
    const double d_scissored = d_beta * splat.alpha * record.gauss;
    if (zeros == 0) {
        const double dx = pixel.x - splat.mu2d.x;
        const double dy = pixel.y - splat.mu2d.y;
        const Sym2 &inv = splat.inv_cov2d;
        out.d_alpha = d_beta * record.gauss;
        out.d_mu2d = {d_scissored * (inv.xx * dx + inv.xy * dy), d_scissored * (inv.xy * dx + inv.yy * dy)};
        out.d_inv_cov = {-0.5 * dx * dx * d_scissored, -dx * dy * d_scissored, -0.5 * dy * dy * d_scissored};
        for (int k = 0; k < num_curves; ++k) out.delta[k] = d_scissored;
    } else if (std::popcount(zeros) == 1) {
        // Only the curve that is off can change the product.
        out.delta[std::countr_zero(zeros)] = d_scissored;
    }
    return out;
}

void backward_curves(const ProjectedSplat &splat, Vec2 pixel, std::uint32_t gbits, std::span<const double> delta,
                     std::span<Vec2> d_points, CurveStats *stats) {
    const int num_curves = static_cast<int>(splat.curves.size());
    for (int k = 0; k < num_curves; ++k) {
        const int g = static_cast<int>((gbits >> k) & 1u);
        const SkipDecision decision = classify_skip(delta[k], g);
        if (stats) {
            switch (decision) {
            case SkipDecision::skip_optimal: ++stats->skip_optimal; break;
            case SkipDecision::skip_at_min: ++stats->skip_at_min; break;
            case SkipDecision::skip_at_max: ++stats->skip_at_max; break;
            case SkipDecision::proceed: ++stats->proceed; break;
            }
        }
        if (decision != SkipDecision::proceed) continue;

        std::array<Vec2, 4> pts;
        for (int i = 0; i < 4; ++i) pts[i] = splat.curve_points[4 * k + i];
        for (Axis axis : {Axis::x, Axis::y}) {
            const int a = static_cast<int>(axis);
            // One solve in t per axis serves all four control points.
            const CubicRoots t_roots = detail::crossing_parameters(pts, axis, pixel);
            if (t_roots.identically_zero) {
                if (stats) stats->empty_coordinates += 4;
                continue;
            }
            std::array<std::array<double, 4>, 3> basis;
            for (int r = 0; r < t_roots.count; ++r) basis[r] = bernstein(t_roots.values[r]);
            const std::span<const std::array<double, 4>> roots(basis.data(), t_roots.count);
            for (int i = 0; i < 4; ++i) {
                std::array<double, 3> phis{};
                const int n = detail::phi_candidates_from_basis(pts, i, axis, pixel, roots, phis);
                const double current = pts[i][a];
                const auto nearest = detail::nearest_crossing(phis, n, current);
                if (!nearest.has_left && !nearest.has_right) {
                    if (stats) ++stats->empty_coordinates;
                    continue;
                }
                const double dg = detail::approx_curve_grad(nearest, current, g);
                d_points[4 * k + i][a] += delta[k] * dg;
                if (stats) stats->max_abs_grad = std::max(stats->max_abs_grad, std::abs(dg));
            }
        }
    }
}

namespace {

// Per-slot accumulator layout: mu(2) inv(3) alpha(1) color(3) points(8M).
constexpr int kFixedStride = 9;

} // namespace

std::vector<ImageSpaceGradient> backward_image_space(const RenderTape &tape,
                                                     const std::vector<ProjectedSplat> &prepared,
                                                     const Image &d_image, const BackwardOptions &options,
                                                     CurveStats *stats) {
    check_shapes(tape, prepared, d_image);
    const int num_curves = tape.num_curves;
    const std::size_t stride = kFixedStride + 8 * static_cast<std::size_t>(num_curves);
    const bool curves = options.curve_gradients && tape.curves_enabled;

    std::vector<std::vector<double>> partial(tape.tiles.size());
    std::vector<CurveStats> tile_stats(tape.tiles.size());
    parallel_for(tape.tiles.size(), [&](std::size_t t) {
        const TileTape &tile = tape.tiles[t];
        std::vector<double> &acc = partial[t];
        acc.assign(tile.bin.size() * stride, 0.0);
        std::vector<Vec2> d_points(4 * static_cast<std::size_t>(num_curves));
        for (int y = tile.rect.y0; y < tile.rect.y1; ++y) {
            for (int x = tile.rect.x0; x < tile.rect.x1; ++x) {
                const Rgb d_pixel{d_image.at(x, y, 0), d_image.at(x, y, 1), d_image.at(x, y, 2)};
                const Vec2 pixel{x + 0.5, y + 0.5};
                reverse_pixel(
                    tile, tape.local_index(tile, x, y), prepared, tape.background, d_pixel,
                    [&](std::int32_t r, const Rgb &d_color, double d_beta) {
                        const TapeRecord &rec = tile.records[r];
                        const ProjectedSplat &ps = prepared[rec.splat];
                        double *slot = acc.data() + rec.slot * stride;
                        const GaussianGradient gg = backward_gaussian(ps, rec, pixel, d_beta, num_curves);
                        slot[0] += gg.d_mu2d.x;
                        slot[1] += gg.d_mu2d.y;
                        slot[2] += gg.d_inv_cov.xx;
                        slot[3] += gg.d_inv_cov.xy;
                        slot[4] += gg.d_inv_cov.yy;
                        slot[5] += gg.d_alpha;
                        slot[6] += d_color[0];
                        slot[7] += d_color[1];
                        slot[8] += d_color[2];
                        if (!curves) return;
                        std::fill(d_points.begin(), d_points.end(), Vec2{});
                        backward_curves(ps, pixel, rec.gbits, std::span<const double>(gg.delta.data(), num_curves),
                                        d_points, &tile_stats[t]);
                        for (std::size_t i = 0; i < d_points.size(); ++i) {
                            slot[kFixedStride + 2 * i] += d_points[i].x;
                            slot[kFixedStride + 2 * i + 1] += d_points[i].y;
                        }
                    });
            }
        }
    });

    std::vector<ImageSpaceGradient> out(prepared.size());
    for (auto &g : out) g.d_points.assign(4 * static_cast<std::size_t>(num_curves), Vec2{});
    for (std::size_t t = 0; t < tape.tiles.size(); ++t) {
        const TileTape &tile = tape.tiles[t];
        for (std::size_t s = 0; s < tile.bin.size(); ++s) {
            const double *slot = partial[t].data() + s * stride;
            ImageSpaceGradient &g = out[tile.bin[s]];
            g.d_mu2d.x += slot[0];
            g.d_mu2d.y += slot[1];
            g.d_inv_cov.xx += slot[2];
            g.d_inv_cov.xy += slot[3];
            g.d_inv_cov.yy += slot[4];
            g.d_alpha += slot[5];
            for (int c = 0; c < 3; ++c) g.d_color[c] += slot[6 + c];
            for (std::size_t i = 0; i < g.d_points.size(); ++i) {
                g.d_points[i].x += slot[kFixedStride + 2 * i];
                g.d_points[i].y += slot[kFixedStride + 2 * i + 1];
            }
        }
        if (stats) stats->merge(tile_stats[t]);
    }
    return out;
}

namespace {

// Full symmetric dL/dSigma from the gradient on the three entries of inv = Sigma^-1.
Eigen::Matrix2d covariance_gradient(const ProjectedSplat &ps, const ImageSpaceGradient &g) {
    Eigen::Matrix2d inv;
    inv << ps.inv_cov2d.xx, ps.inv_cov2d.xy, ps.inv_cov2d.xy, ps.inv_cov2d.yy;
    Eigen::Matrix2d g_inv;
    g_inv << g.d_inv_cov.xx, 0.5 * g.d_inv_cov.xy, 0.5 * g.d_inv_cov.xy, g.d_inv_cov.yy;
    return -inv * g_inv * inv;
}

void pullback_flat(const Splat &s, const ProjectedSplat &ps, const ImageSpaceGradient &g, SplatGradient &out) {
    out.d_center = {g.d_mu2d.x, g.d_mu2d.y, 0.0};
    const Eigen::Matrix2d gs = covariance_gradient(ps, g);
    const double c = std::cos(s.theta);
    const double sn = std::sin(s.theta);
    const double v1 = std::exp(2.0 * s.log_scales.x);
    const double v2 = std::exp(2.0 * s.log_scales.y);
    const double gxx = gs(0, 0), gxy = gs(0, 1), gyy = gs(1, 1);
    // Sigma = [[c^2 v1 + s^2 v2, cs (v1 - v2)], [., s^2 v1 + c^2 v2]]
    out.d_theta = (v1 - v2) * (-2.0 * c * sn * gxx + 2.0 * (c * c - sn * sn) * gxy + 2.0 * c * sn * gyy);
    out.d_log_scales.x = 2.0 * v1 * (c * c * gxx + 2.0 * c * sn * gxy + sn * sn * gyy);
    out.d_log_scales.y = 2.0 * v2 * (sn * sn * gxx - 2.0 * c * sn * gxy + c * c * gyy);

    const auto [r1, r2] = rotation_columns(s.theta);
    out.d_c_curve.resize(g.d_points.size());
    for (std::size_t i = 0; i < g.d_points.size(); ++i) {
        out.d_c_curve[i] = {dot(g.d_points[i], r1), dot(g.d_points[i], r2)};
    }
}

// dR/dq_c for a unit quaternion (w, x, y, z), c = 0..3.
std::array<Eigen::Matrix3d, 4> rotation_derivatives(const Eigen::Vector4d &q) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    std::array<Eigen::Matrix3d, 4> d;
    d[0] << 0, -z, y, z, 0, -x, -y, x, 0;
    d[1] << 0, y, z, y, -2 * x, -w, z, w, -2 * x;
    d[2] << -2 * y, x, w, x, 0, z, -w, z, -2 * y;
    d[3] << -2 * z, -w, x, w, -2 * z, y, x, y, 0;
    for (auto &m : d) m *= 2.0;
    return d;
}

void pullback_3d(const Splat &s, SceneMode mode, const Camera &cam, const ProjectedSplat &ps,
                 const ImageSpaceGradient &g, SplatGradient &out) {
    const Eigen::Matrix3d w = cam.view.topLeftCorner<3, 3>();
    const Eigen::Vector3d t = cam.to_camera(s.center);
    const Eigen::Matrix<double, 2, 3> j = perspective_jacobian(cam, t);
    const Eigen::Matrix<double, 2, 3> jw = j * w;
    const Eigen::Matrix3d cov3 = covariance_3d(s);

    const Eigen::Matrix2d g2 = covariance_gradient(ps, g);
    const Eigen::Matrix3d g3 = jw.transpose() * g2 * jw;
    const Eigen::Matrix<double, 2, 3> d_jw = 2.0 * g2 * jw * cov3;
    const Eigen::Matrix<double, 2, 3> d_j = d_jw * w.transpose();

    const double iz = 1.0 / t.z();
    const double iz2 = iz * iz;
    Eigen::Vector3d d_t = j.transpose() * Eigen::Vector2d(g.d_mu2d.x, g.d_mu2d.y);
    d_t.x() += d_j(0, 2) * (-cam.fx * iz2);
    d_t.y() += d_j(1, 2) * (-cam.fy * iz2);
    d_t.z() += d_j(0, 0) * (-cam.fx * iz2) + d_j(0, 2) * (2.0 * cam.fx * t.x() * iz2 * iz) +
               d_j(1, 1) * (-cam.fy * iz2) + d_j(1, 2) * (2.0 * cam.fy * t.y() * iz2 * iz);
    const Eigen::Vector3d d_mu = w.transpose() * d_t;
    out.d_center = {d_mu.x(), d_mu.y(), d_mu.z()};

    const Eigen::Matrix3d r = rotation_matrix(s.rotation);
    const Eigen::Vector3d sc(std::exp(s.log_scales.x), std::exp(s.log_scales.y), std::exp(s.log_scales.z));
    const Eigen::Vector3d sc2 = sc.cwiseProduct(sc);
    const Eigen::Matrix3d rgr = r.transpose() * g3 * r;
    out.d_log_scales = {2.0 * sc2[0] * rgr(0, 0), 2.0 * sc2[1] * rgr(1, 1), 2.0 * sc2[2] * rgr(2, 2)};

    const Eigen::Matrix3d d_r = 2.0 * g3 * r * sc2.asDiagonal();
    const Eigen::Vector4d raw(s.rotation.w, s.rotation.x, s.rotation.y, s.rotation.z);
    const double qn = raw.norm();
    const Eigen::Vector4d q = raw / qn;
    const auto dr_dq = rotation_derivatives(q);
    Eigen::Vector4d d_q;
    for (int c = 0; c < 4; ++c) d_q[c] = (d_r.array() * dr_dq[c].array()).sum();
    const Eigen::Vector4d d_raw = (d_q - q * q.dot(d_q)) / qn;
    out.d_quat = {d_raw[0], d_raw[1], d_raw[2], d_raw[3]};

    // Control points: exact perspective map of each lifted point.
    const std::vector<Vec3> world = mode == SceneMode::projected3d ? lift_control_points(s) : s.c3d_curve;
    std::vector<Eigen::Vector3d> d_world(world.size());
    for (std::size_t i = 0; i < world.size(); ++i) {
        const Eigen::Vector3d tp = cam.to_camera(world[i]);
        d_world[i] = w.transpose() * (perspective_jacobian(cam, tp).transpose() *
                                      Eigen::Vector2d(g.d_points[i].x, g.d_points[i].y));
    }
    if (mode == SceneMode::projected3d) {
        out.d_c_curve.resize(world.size());
        for (std::size_t i = 0; i < world.size(); ++i) {
            out.d_c_curve[i] = {r.col(0).dot(d_world[i]), r.col(1).dot(d_world[i])};
        }
    } else {
        out.d_c3d_curve.resize(world.size());
        for (std::size_t i = 0; i < world.size(); ++i) {
            out.d_c3d_curve[i] = {d_world[i].x(), d_world[i].y(), d_world[i].z()};
        }
    }
}

} // namespace

GradientBuffer pullback(const Scene &scene, const Camera *cam, const std::vector<ProjectedSplat> &prepared,
                        const std::vector<ImageSpaceGradient> &image_space, const RasterConfig &) {
    if (image_space.size() != prepared.size()) {
        throw TapeMismatchError("pullback: gradient count does not match the prepared splats");
    }
    if (scene.mode != SceneMode::flat2d && !cam) throw SceneError("pullback: 3D scenes need a camera");
    GradientBuffer out;
    out.splats.resize(scene.splats.size());
    for (std::size_t i = 0; i < scene.splats.size(); ++i) {
        const Splat &s = scene.splats[i];
        auto &g = out.splats[i];
        if (scene.mode == SceneMode::projected3d_curve3d) {
            g.d_c3d_curve.assign(s.c3d_curve.size(), Vec3{});
        } else {
            g.d_c_curve.assign(s.c_curve.size(), Vec2{});
        }
    }
    for (std::size_t p = 0; p < prepared.size(); ++p) {
        const ProjectedSplat &ps = prepared[p];
        const ImageSpaceGradient &g = image_space[p];
        const Splat &s = scene.splats[ps.source];
        SplatGradient &out_g = out.splats[ps.source];
        if (scene.mode == SceneMode::flat2d) {
            pullback_flat(s, ps, g, out_g);
        } else {
            pullback_3d(s, scene.mode, *cam, ps, g, out_g);
        }
        out_g.d_raw_opacity = g.d_alpha * ps.alpha * (1.0 - ps.alpha);
        out_g.d_color = g.d_color;
    }
    return out;
}

BackwardResult backward(const Scene &scene, const Camera *cam, const std::vector<ProjectedSplat> &prepared,
                        const RenderTape &tape, const Image &d_image, const RasterConfig &config,
                        const BackwardOptions &options) {
    BackwardResult r;
    r.image_space = backward_image_space(tape, prepared, d_image, options, &r.curve_stats);
    r.grads = pullback(scene, cam, prepared, r.image_space, config);
    return r;
}

} // namespace discsplat
