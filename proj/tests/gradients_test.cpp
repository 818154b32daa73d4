// Copyright Contributors to the DiscSplat Project
// SPDX-License-Identifier: Apache-2.0

#include "discsplat/fit.hpp"
#include "discsplat/gradients.hpp"
#include "discsplat/parallel.hpp"
#include "harness.hpp"
#include "random_scenes.hpp"

#include <Eigen/Geometry>
#include <gtest/gtest.h>

#include <bit>
#include <random>

namespace discsplat {
namespace {

using checks::random_scene;
using checks::RandomSceneOptions;

TEST(ClassifySkip, Examples) {
    EXPECT_EQ(classify_skip(0.0, 1), SkipDecision::skip_optimal);
    EXPECT_EQ(classify_skip(0.3, 0), SkipDecision::skip_at_min);
    EXPECT_EQ(classify_skip(-0.3, 0), SkipDecision::proceed);
    EXPECT_EQ(classify_skip(-0.3, 1), SkipDecision::skip_at_max);
    EXPECT_EQ(classify_skip(0.3, 1), SkipDecision::proceed);
}

TEST(ClassifySkip, TotalOverSignAndValue) {
    for (double delta : {-1e300, -2.5, -1e-300, -0.0, 0.0, 1e-300, 2.5, 1e300}) {
        for (int g : {0, 1}) {
            const SkipDecision d = classify_skip(delta, g);
            if (delta == 0.0) {
                EXPECT_EQ(d, SkipDecision::skip_optimal);
            } else if (delta > 0.0) {
                EXPECT_EQ(d, g == 0 ? SkipDecision::skip_at_min : SkipDecision::proceed);
            } else {
                EXPECT_EQ(d, g == 1 ? SkipDecision::skip_at_max : SkipDecision::proceed);
            }
        }
    }
}

TEST(ApproxCurveGrad, EmptyIsZero) {
    EXPECT_EQ(approx_curve_grad(CrossingSolutions{}, 0.0, 0), 0.0);
    EXPECT_EQ(approx_curve_grad(CrossingSolutions{}, 3.0, 1), 0.0);
}

TEST(ApproxCurveGrad, SingleSideFromCrossingExample) {
    // The x^3 graph with w0.x free crosses pixel (2, 0.125) only at 12.
    const std::vector<Vec2> graph{{0, 0}, {1.0 / 3, 0}, {2.0 / 3, 0}, {1, 1}};
    const CrossingSolutions s = crossing_solutions(graph, 0, 0, Axis::x, {2.0, 0.125});
    ASSERT_EQ(s.side, CrossingSide::single_right);
    EXPECT_NEAR(approx_curve_grad(s, 0.0, 0), 1.0 / (12.0 + 1e-5), 1e-12);
    EXPECT_NEAR(approx_curve_grad(s, 0.0, 0), 0.0833326, 1e-6);
}

TEST(ApproxCurveGrad, BothSides) {
    CrossingSolutions s;
    s.values = {-3.0, 5.0};
    s.side = CrossingSide::both_sides;
    s.nearest_left = -3.0;
    s.nearest_right = 5.0;
    EXPECT_NEAR(approx_curve_grad(s, 0.0, 1), 0.13333, 1e-5);
    EXPECT_NEAR(approx_curve_grad(s, 0.0, 1), -1.0 / (-3.0 - 1e-5) - 1.0 / (5.0 + 1e-5), 1e-15);
}

TEST(ApproxCurveGrad, DescentMovesTowardCrossingWhenFlipIsWanted) {
    for (int g : {0, 1}) {
        for (double target : {-4.0, 7.0}) {
            CrossingSolutions s;
            s.values = {target};
            if (target < 0) {
                s.side = CrossingSide::single_left;
                s.nearest_left = target;
            } else {
                s.side = CrossingSide::single_right;
                s.nearest_right = target;
            }
            // The loss wants the flip: lowering g when g = 1, raising it when g = 0.
            const double delta = g == 1 ? 1.0 : -1.0;
            ASSERT_EQ(classify_skip(delta, g), SkipDecision::proceed);
            const double step = -delta * approx_curve_grad(s, 0.0, g);
            EXPECT_GT(step * target, 0.0) << "g=" << g << " target=" << target;
        }
    }
}

// Pixel colour of a front-to-back blend with explicit betas.
Rgb blend(const std::vector<Rgb> &colors, const std::vector<double> &betas, const Rgb &bg) {
    Rgb c{};
    double t = 1.0;
    for (std::size_t i = 0; i < colors.size(); ++i) {
        for (int ch = 0; ch < 3; ++ch) c[ch] += colors[i][ch] * betas[i] * t;
        t *= 1.0 - betas[i];
    }
    for (int ch = 0; ch < 3; ++ch) c[ch] += t * bg[ch];
    return c;
}

TEST(BackwardBlendPixel, MatchesFiniteDifferences) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0), b(0.05, 0.95), d(-1.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<Rgb> colors(3);
        std::vector<double> betas(3), ts(3);
        for (auto &c : colors) c = {u(rng), u(rng), u(rng)};
        for (auto &x : betas) x = b(rng);
        double t = 1.0;
        for (int i = 0; i < 3; ++i) {
            ts[i] = t;
            t *= 1.0 - betas[i];
        }
        const Rgb bg{u(rng), u(rng), u(rng)}, d_pixel{d(rng), d(rng), d(rng)};
        std::vector<BlendGradient> out(3);
        backward_blend_pixel(colors, betas, ts, bg, d_pixel, out);
        auto scalar = [&](const std::vector<double> &bs) {
            const Rgb c = blend(colors, bs, bg);
            return d_pixel[0] * c[0] + d_pixel[1] * c[1] + d_pixel[2] * c[2];
        };
        for (int i = 0; i < 3; ++i) {
            const double h = 1e-6;
            auto plus = betas, minus = betas;
            plus[i] += h;
            minus[i] -= h;
            const double fd = (scalar(plus) - scalar(minus)) / (2.0 * h);
            EXPECT_NEAR(out[i].d_beta, fd, 1e-6 * std::max(1.0, std::abs(fd)));
            for (int ch = 0; ch < 3; ++ch) EXPECT_NEAR(out[i].d_color[ch], d_pixel[ch] * betas[i] * ts[i], 1e-15);
        }
    }
}

TEST(BackwardBlendPixel, OpaqueSingleAndHiddenContributors) {
    const Rgb d_pixel{0.3, -0.2, 0.7};
    std::vector<BlendGradient> out(2);
    const std::vector<Rgb> colors{{1, 0, 0}, {0, 1, 0}};
    const std::vector<double> betas{1.0, 0.5}, ts{1.0, 0.0};
    backward_blend_pixel(colors, betas, ts, {0, 0, 0}, d_pixel, out);
    EXPECT_EQ(out[0].d_color, d_pixel);
    EXPECT_EQ(out[1].d_color, (Rgb{0, 0, 0}));
    EXPECT_EQ(out[1].d_beta, 0.0);
}

ProjectedSplat lone_splat(std::mt19937_64 &rng, int num_curves) {
    std::uniform_real_distribution<double> u(-1.0, 1.0), pos(8.0, 24.0), var(2.0, 20.0);
    ProjectedSplat ps;
    ps.mu2d = {pos(rng), pos(rng)};
    ps.cov2d = {var(rng), 0.0, var(rng)};
    ps.cov2d.xy = 0.8 * std::sqrt(ps.cov2d.xx * ps.cov2d.yy) * u(rng);
    const double det = ps.cov2d.xx * ps.cov2d.yy - ps.cov2d.xy * ps.cov2d.xy;
    ps.inv_cov2d = {ps.cov2d.yy / det, -ps.cov2d.xy / det, ps.cov2d.xx / det};
    ps.alpha = 0.2 + 0.7 * std::abs(u(rng));
    ps.color = {0.5, 0.5, 0.5};
    ps.curves.assign(num_curves, non_scissoring_curve());
    ps.curve_points.assign(4 * num_curves, ps.mu2d);
    return ps;
}

double beta_at(const ProjectedSplat &ps, Vec2 p) {
    return ps.alpha * simd::det_exp(simd::footprint_power(ps.footprint(), p.x, p.y));
}

TEST(BackwardGaussian, CenterIsStationary) {
    std::mt19937_64 rng(5);
    const ProjectedSplat ps = lone_splat(rng, 3);
    TapeRecord rec;
    rec.gbits = full_mask(3);
    rec.gauss = 1.0;
    const GaussianGradient g = backward_gaussian(ps, rec, ps.mu2d, 0.7, 3);
    EXPECT_EQ(g.d_mu2d.x, 0.0);
    EXPECT_EQ(g.d_mu2d.y, 0.0);
    EXPECT_DOUBLE_EQ(g.d_alpha, 0.7);
}

TEST(BackwardGaussian, MatchesFiniteDifferencesWhenUnscissored) {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> off(-4.0, 4.0);
    for (int trial = 0; trial < 300; ++trial) {
        const ProjectedSplat ps = lone_splat(rng, 2);
        const Vec2 p{ps.mu2d.x + off(rng), ps.mu2d.y + off(rng)};
        TapeRecord rec;
        rec.gbits = full_mask(2);
        rec.gauss = simd::det_exp(simd::footprint_power(ps.footprint(), p.x, p.y));
        rec.beta = ps.alpha * rec.gauss;
        const GaussianGradient g = backward_gaussian(ps, rec, p, 1.0, 2);
        const double h = 1e-6;
        auto fd = [&](auto &&mutate) {
            ProjectedSplat a = ps, b = ps;
            mutate(a, h);
            mutate(b, -h);
            return (beta_at(a, p) - beta_at(b, p)) / (2.0 * h);
        };
        auto near = [](double x, double y) { return std::abs(x - y) <= 1e-5 * std::max(std::abs(y), 1e-4); };
        const double fx = fd([](ProjectedSplat &s, double e) { s.mu2d.x += e; });
        const double fy = fd([](ProjectedSplat &s, double e) { s.mu2d.y += e; });
        const double fa = fd([](ProjectedSplat &s, double e) { s.alpha += e; });
        const double fxx = fd([](ProjectedSplat &s, double e) { s.inv_cov2d.xx += e; });
        const double fxy = fd([](ProjectedSplat &s, double e) { s.inv_cov2d.xy += e; });
        EXPECT_TRUE(near(g.d_mu2d.x, fx)) << g.d_mu2d.x << " vs " << fx;
        EXPECT_TRUE(near(g.d_mu2d.y, fy)) << g.d_mu2d.y << " vs " << fy;
        EXPECT_TRUE(near(g.d_alpha, fa)) << g.d_alpha << " vs " << fa;
        EXPECT_TRUE(near(g.d_inv_cov.xx, fxx)) << g.d_inv_cov.xx << " vs " << fxx;
        EXPECT_TRUE(near(g.d_inv_cov.xy, fxy)) << g.d_inv_cov.xy << " vs " << fxy;
    }
}

TEST(BackwardGaussian, DeltaFollowsTheIndicatorProduct) {
    std::mt19937_64 rng(7);
    const ProjectedSplat ps = lone_splat(rng, 3);
    TapeRecord rec;
    rec.gauss = 0.5;
    const Vec2 p{ps.mu2d.x + 1.0, ps.mu2d.y};
    const double expect = 2.0 * ps.alpha * 0.5;

    rec.gbits = 0b111;
    GaussianGradient g = backward_gaussian(ps, rec, p, 2.0, 3);
    for (int k = 0; k < 3; ++k) EXPECT_DOUBLE_EQ(g.delta[k], expect);

    rec.gbits = 0b101; // curve 1 alone is off
    g = backward_gaussian(ps, rec, p, 2.0, 3);
    EXPECT_EQ(g.delta[0], 0.0);
    EXPECT_DOUBLE_EQ(g.delta[1], expect);
    EXPECT_EQ(g.delta[2], 0.0);
    EXPECT_EQ(g.d_alpha, 0.0);
    EXPECT_EQ(g.d_mu2d.x, 0.0);

    rec.gbits = 0b001; // two curves off: no single flip changes the product
    g = backward_gaussian(ps, rec, p, 2.0, 3);
    for (int k = 0; k < 3; ++k) EXPECT_EQ(g.delta[k], 0.0);
}

Image l1_gradient(const Image &render, const Image &target) {
    return loss(render, target, 0.0).d_render;
}

// One splat in the middle of a 32x32 canvas; the target is darker than it
// on the left half.
struct HalfDarkCase {
    Scene scene;
    Image target{32, 32};
    HalfDarkCase() {
        scene.M = 3;
        scene.background = {0.8, 0.8, 0.8};
        Splat s;
        s.center = {16.0, 16.0, 0.0};
        s.log_scales = {std::log(5.0), std::log(5.0), 0.0};
        s.raw_opacity = 3.0;
        s.color = {0.8, 0.8, 0.8};
        s.c_curve = non_cutting_curves(5.0, 3);
        scene.splats.push_back(s);
        for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 32; ++x)
                for (int c = 0; c < 3; ++c) target.at(x, y, c) = x < 16 ? 0.2 : 0.8;
    }
};

TEST(BackwardCurves, HalfDarkTargetMovesSomeControlPoint) {
    HalfDarkCase hc;
    hc.scene.splats[0].color = {0.9, 0.9, 0.9};
    const auto prepared = prepare(hc.scene, nullptr, 32, 32);
    const RenderTape tape = render(prepared, 32, 32, hc.scene.background);
    const BackwardResult r = backward(hc.scene, nullptr, prepared, tape, l1_gradient(tape.image, hc.target));
    double largest = 0.0;
    for (const auto &d : r.grads.splats[0].d_c_curve) largest = std::max({largest, std::abs(d.x), std::abs(d.y)});
    EXPECT_GT(largest, 0.0);
    EXPECT_GT(r.curve_stats.proceed, 0u);
}

TEST(BackwardCurves, SkippedWhenKeepingIsWanted) {
    std::mt19937_64 rng(8);
    ProjectedSplat ps = lone_splat(rng, 2);
    const Scene cut = random_scene(rng, {.splats = 1, .M = 2, .cutting = true});
    ps = prepare(cut, nullptr, 32, 32)[0];
    std::vector<Vec2> d(8);
    CurveStats stats;
    const std::array<double, 2> delta{-1.0, -1.0};
    backward_curves(ps, ps.mu2d, 0b11, delta, d, &stats);
    EXPECT_EQ(stats.skip_at_max, 2u);
    for (const auto &v : d) EXPECT_EQ(v, (Vec2{0, 0}));
}

TEST(BackwardCurves, DoublingUpstreamDoublesCurveGradients) {
    std::mt19937_64 rng(9);
    const Scene scene = random_scene(rng, {.splats = 6, .cutting = true});
    Image target(32, 32);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto &v : target.data()) v = u(rng);
    const auto prepared = prepare(scene, nullptr, 32, 32);
    const RenderTape tape = render(prepared, 32, 32, scene.background);
    Image d = l1_gradient(tape.image, target);
    const BackwardResult once = backward(scene, nullptr, prepared, tape, d);
    for (auto &v : d.data()) v *= 2.0;
    const BackwardResult twice = backward(scene, nullptr, prepared, tape, d);
    bool any = false;
    for (std::size_t s = 0; s < scene.splats.size(); ++s) {
        for (std::size_t i = 0; i < once.grads.splats[s].d_c_curve.size(); ++i) {
            const Vec2 a = once.grads.splats[s].d_c_curve[i], b = twice.grads.splats[s].d_c_curve[i];
            EXPECT_EQ(2.0 * a.x, b.x);
            EXPECT_EQ(2.0 * a.y, b.y);
            any |= a.x != 0.0 || a.y != 0.0;
        }
    }
    EXPECT_TRUE(any);
}

TEST(Backward, CurveGradientsNeverReachCenterOrTheta) {
    std::mt19937_64 rng(10);
    for (int trial = 0; trial < 10; ++trial) {
        const Scene scene = random_scene(rng, {.splats = 6, .cutting = true});
        Image target(32, 32);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (auto &v : target.data()) v = u(rng);
        const auto prepared = prepare(scene, nullptr, 32, 32);
        const RenderTape tape = render(prepared, 32, 32, scene.background);
        const Image d = l1_gradient(tape.image, target);
        BackwardOptions off;
        off.curve_gradients = false;
        const BackwardResult with = backward(scene, nullptr, prepared, tape, d);
        const BackwardResult without = backward(scene, nullptr, prepared, tape, d, {}, off);
        for (std::size_t s = 0; s < scene.splats.size(); ++s) {
            EXPECT_EQ(with.grads.splats[s].d_center, without.grads.splats[s].d_center);
            EXPECT_EQ(with.grads.splats[s].d_theta, without.grads.splats[s].d_theta);
            EXPECT_EQ(with.grads.splats[s].d_log_scales, without.grads.splats[s].d_log_scales);
        }
    }
    // A pure control-point upstream gradient leaves the frame untouched.
    const Scene scene = random_scene(rng, {.splats = 1, .cutting = true});
    const auto prepared = prepare(scene, nullptr, 32, 32);
    std::vector<ImageSpaceGradient> is(1);
    is[0].d_points.assign(12, Vec2{1.0, -2.0});
    const GradientBuffer g = pullback(scene, nullptr, prepared, is);
    EXPECT_EQ(g.splats[0].d_center, (Vec3{0, 0, 0}));
    EXPECT_EQ(g.splats[0].d_theta, 0.0);
}

bool bit_equal(const GradientBuffer &a, const GradientBuffer &b) {
    if (a.splats.size() != b.splats.size()) return false;
    auto eq = [](double x, double y) { return std::bit_cast<std::uint64_t>(x) == std::bit_cast<std::uint64_t>(y); };
    for (std::size_t i = 0; i < a.splats.size(); ++i) {
        const SplatGradient &x = a.splats[i], &y = b.splats[i];
        for (int c = 0; c < 3; ++c) {
            if (!eq(x.d_center[c], y.d_center[c]) || !eq(x.d_log_scales[c], y.d_log_scales[c]) ||
                !eq(x.d_color[c], y.d_color[c]))
                return false;
        }
        if (!eq(x.d_theta, y.d_theta) || !eq(x.d_raw_opacity, y.d_raw_opacity)) return false;
        if (x.d_c_curve.size() != y.d_c_curve.size()) return false;
        for (std::size_t k = 0; k < x.d_c_curve.size(); ++k) {
            if (!eq(x.d_c_curve[k].x, y.d_c_curve[k].x) || !eq(x.d_c_curve[k].y, y.d_c_curve[k].y)) return false;
        }
    }
    return true;
}

TEST(Backward, BitwiseIdenticalAcrossThreadCounts) {
    std::mt19937_64 rng(11);
    const Scene scene = random_scene(rng, {.width = 80, .height = 64, .splats = 40, .cutting = true});
    Image target(80, 64);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto &v : target.data()) v = u(rng);
    auto run = [&](int threads) {
        set_thread_count(threads);
        const auto prepared = prepare(scene, nullptr, 80, 64);
        const RenderTape tape = render(prepared, 80, 64, scene.background);
        return backward(scene, nullptr, prepared, tape, l1_gradient(tape.image, target)).grads;
    };
    const GradientBuffer one = run(1);
    EXPECT_TRUE(bit_equal(one, run(1)));
    EXPECT_TRUE(bit_equal(one, run(3)));
    EXPECT_TRUE(bit_equal(one, run(8)));
    set_thread_count(0);
}

TEST(Backward, UntapedSplatHasZeroGradient) {
    std::mt19937_64 rng(12);
    Scene scene = random_scene(rng, {.splats = 3});
    scene.splats[1].center = {500.0, 500.0, 0.0};
    Image target(32, 32);
    const auto prepared = prepare(scene, nullptr, 32, 32);
    const RenderTape tape = render(prepared, 32, 32, scene.background);
    const GradientBuffer g = backward(scene, nullptr, prepared, tape, l1_gradient(tape.image, target)).grads;
    const SplatGradient &s = g.splats[1];
    EXPECT_EQ(s.d_center, (Vec3{0, 0, 0}));
    EXPECT_EQ(s.d_theta, 0.0);
    EXPECT_EQ(s.d_log_scales, (Vec3{0, 0, 0}));
    EXPECT_EQ(s.d_raw_opacity, 0.0);
    EXPECT_EQ(s.d_color, (Rgb{0, 0, 0}));
    for (const auto &v : s.d_c_curve) EXPECT_EQ(v, (Vec2{0, 0}));
}

TEST(Backward, TapeFromAnotherSceneIsRejected) {
    std::mt19937_64 rng(13);
    const Scene a = random_scene(rng, {.splats = 3});
    const Scene b = random_scene(rng, {.splats = 4});
    const auto pa = prepare(a, nullptr, 32, 32);
    const auto pb = prepare(b, nullptr, 32, 32);
    const RenderTape tape = render(pa, 32, 32, a.background);
    EXPECT_THROW(backward(b, nullptr, pb, tape, Image(32, 32)), TapeMismatchError);
    EXPECT_THROW(backward(a, nullptr, pa, tape, Image(16, 32)), ShapeError);
}

// Linear functional of the image-plane quantities produced by prepare().
struct Probe {
    Vec2 g_mu;
    Sym2 g_inv;
    std::vector<Vec2> g_points;

    double operator()(const ProjectedSplat &ps) const {
        double v = g_mu.x * ps.mu2d.x + g_mu.y * ps.mu2d.y + g_inv.xx * ps.inv_cov2d.xx + g_inv.xy * ps.inv_cov2d.xy +
                   g_inv.yy * ps.inv_cov2d.yy;
        for (std::size_t i = 0; i < g_points.size(); ++i) v += dot(g_points[i], ps.curve_points[i]);
        return v;
    }
    ImageSpaceGradient upstream() const {
        ImageSpaceGradient g;
        g.d_mu2d = g_mu;
        g.d_inv_cov = g_inv;
        g.d_points = g_points;
        return g;
    }
};

Probe random_probe(std::mt19937_64 &rng, std::size_t points, bool with_points) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Probe p{{u(rng), u(rng)}, {u(rng), u(rng), u(rng)}, std::vector<Vec2>(points)};
    if (with_points)
        for (auto &v : p.g_points) v = {u(rng), u(rng)};
    return p;
}

Camera test_camera() {
    Camera cam;
    cam.view.topLeftCorner<3, 3>() = Eigen::AngleAxisd(0.3, Eigen::Vector3d(1, 2, 3).normalized()).toRotationMatrix();
    cam.view.topRightCorner<3, 1>() = Eigen::Vector3d(0.2, -0.1, 6.0);
    cam.fx = 60.0;
    cam.fy = 55.0;
    cam.cx = 16.0;
    cam.cy = 16.0;
    cam.width = cam.height = 32;
    return cam;
}

Scene random_scene_3d(std::mt19937_64 &rng, SceneMode mode) {
    std::normal_distribution<double> n(0.0, 1.0);
    Scene s;
    s.mode = mode;
    s.M = 2;
    for (int i = 0; i < 3; ++i) {
        Splat sp;
        sp.center = {0.4 * n(rng), 0.4 * n(rng), 0.4 * n(rng)};
        sp.rotation = {n(rng), n(rng), n(rng), n(rng)};
        sp.log_scales = {-1.5 + 0.3 * n(rng), -1.5 + 0.3 * n(rng), -1.5 + 0.3 * n(rng)};
        sp.depth_key = i;
        if (mode == SceneMode::projected3d) {
            for (int k = 0; k < 8; ++k) sp.c_curve.push_back({0.3 * n(rng), 0.3 * n(rng)});
        } else {
            for (int k = 0; k < 8; ++k)
                sp.c3d_curve.push_back({sp.center.x + 0.3 * n(rng), sp.center.y + 0.3 * n(rng), sp.center.z + 0.3 * n(rng)});
        }
        s.splats.push_back(sp);
    }
    return s;
}

double &quat_component(Quat &q, int c) { return c == 0 ? q.w : (c == 1 ? q.x : (c == 2 ? q.y : q.z)); }
double quat_component(const Quat &q, int c) { return c == 0 ? q.w : (c == 1 ? q.x : (c == 2 ? q.y : q.z)); }

// Central difference of the probe through prepare() for one scalar parameter.
template <class Get>
double probe_fd(const Scene &scene, const Camera *cam, std::size_t splat, const std::vector<Probe> &probes, Get &&get) {
    const double h = 1e-6;
    auto eval = [&](double e) {
        Scene moved = scene;
        get(moved.splats[splat]) += e;
        double v = 0.0;
        const auto prepared = prepare(moved, cam, 32, 32);
        for (const auto &ps : prepared) v += probes[ps.source](ps);
        return v;
    };
    return (eval(h) - eval(-h)) / (2.0 * h);
}

void expect_pullback_matches(const Scene &scene, const Camera *cam, bool with_points, std::mt19937_64 &rng) {
    const auto prepared = prepare(scene, cam, 32, 32);
    ASSERT_EQ(prepared.size(), scene.splats.size());
    std::vector<Probe> probes;
    for (std::size_t i = 0; i < scene.splats.size(); ++i) probes.push_back(random_probe(rng, 4 * scene.M, with_points));
    std::vector<ImageSpaceGradient> up;
    for (const auto &ps : prepared) up.push_back(probes[ps.source].upstream());
    const GradientBuffer g = pullback(scene, cam, prepared, up);
    auto check = [](double analytic, double fd, const char *what) {
        EXPECT_NEAR(analytic, fd, 1e-5 * std::max(1.0, std::abs(fd))) << what;
    };
    for (std::size_t i = 0; i < scene.splats.size(); ++i) {
        const SplatGradient &sg = g.splats[i];
        if (!with_points) {
            for (int c = 0; c < (scene.mode == SceneMode::flat2d ? 2 : 3); ++c) {
                check(sg.d_center[c], probe_fd(scene, cam, i, probes, [c](Splat &s) -> double & { return s.center[c]; }),
                      "center");
            }
            for (int c = 0; c < (scene.mode == SceneMode::flat2d ? 2 : 3); ++c) {
                check(sg.d_log_scales[c],
                      probe_fd(scene, cam, i, probes, [c](Splat &s) -> double & { return s.log_scales[c]; }), "scale");
            }
            if (scene.mode == SceneMode::flat2d) {
                check(sg.d_theta, probe_fd(scene, cam, i, probes, [](Splat &s) -> double & { return s.theta; }), "theta");
            } else {
                for (int c = 0; c < 4; ++c) {
                    check(quat_component(sg.d_quat, c), probe_fd(scene, cam, i, probes, [c](Splat &s) -> double & { return quat_component(s.rotation, c); }),
                          "quat");
                }
            }
            continue;
        }
        for (std::size_t k = 0; k < sg.d_c_curve.size(); ++k) {
            for (int c = 0; c < 2; ++c) {
                check(sg.d_c_curve[k][c],
                      probe_fd(scene, cam, i, probes, [k, c](Splat &s) -> double & { return s.c_curve[k][c]; }), "c_curve");
            }
        }
        for (std::size_t k = 0; k < sg.d_c3d_curve.size(); ++k) {
            for (int c = 0; c < 3; ++c) {
                check(sg.d_c3d_curve[k][c],
                      probe_fd(scene, cam, i, probes, [k, c](Splat &s) -> double & { return s.c3d_curve[k][c]; }),
                      "c3d_curve");
            }
        }
    }
}

TEST(Pullback, FlatMatchesFiniteDifferences) {
    std::mt19937_64 rng(14);
    for (int trial = 0; trial < 5; ++trial) {
        const Scene scene = random_scene(rng, {.splats = 4, .cutting = true});
        expect_pullback_matches(scene, nullptr, false, rng);
        expect_pullback_matches(scene, nullptr, true, rng);
    }
}

TEST(Pullback, ProjectedMatchesFiniteDifferences) {
    std::mt19937_64 rng(15);
    const Camera cam = test_camera();
    for (SceneMode mode : {SceneMode::projected3d, SceneMode::projected3d_curve3d}) {
        for (int trial = 0; trial < 5; ++trial) {
            const Scene scene = random_scene_3d(rng, mode);
            expect_pullback_matches(scene, &cam, false, rng);
            expect_pullback_matches(scene, &cam, true, rng);
        }
    }
}

TEST(GradCheck, SmallRunPasses) {
    checks::GradCheckOptions o;
    o.scenes = 12;
    const checks::CheckTable t = checks::grad_check(o);
    EXPECT_TRUE(t.pass()) << t.format();
    for (const auto &row : t.rows) EXPECT_GT(row.samples, 0u) << row.name;
}

} // namespace
} // namespace discsplat
