// Copyright Contributors to the DiscSplat Project
// SPDX-License-Identifier: Apache-2.0

#include "discsplat/fit.hpp"
#include "discsplat/metrics.hpp"
#include "discsplat/parallel.hpp"
#include "random_scenes.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

namespace discsplat {
namespace {

Image random_image(std::mt19937_64 &rng, int w, int h) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Image img(w, h);
    for (auto &v : img.data()) v = u(rng);
    return img;
}

TEST(Loss, IdenticalImagesGiveZero) {
    std::mt19937_64 rng(1);
    const Image a = random_image(rng, 12, 9);
    const LossValue lv = loss(a, a, 0.2);
    EXPECT_NEAR(lv.value, 0.0, 1e-12);
    for (double v : lv.d_render.data()) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(Loss, SingleChannelOffset) {
    std::mt19937_64 rng(2);
    const Image target = random_image(rng, 8, 8);
    Image render = target;
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) render.at(x, y, 1) += 0.1;
    const LossValue lv = loss(render, target, 0.0);
    EXPECT_NEAR(lv.value, 0.1 / 3.0, 1e-12);
    for (int y = 0; y < 8; ++y) {
        for (int x = 0; x < 8; ++x) {
            EXPECT_GT(lv.d_render.at(x, y, 1), 0.0);
            EXPECT_EQ(lv.d_render.at(x, y, 0), 0.0);
        }
    }
}

TEST(Loss, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(3);
    const Image render = random_image(rng, 14, 11), target = random_image(rng, 14, 11);
    for (double lambda : {0.0, 0.2, 1.0}) {
        const LossValue lv = loss(render, target, lambda);
        std::uniform_int_distribution<std::size_t> pick(0, render.data().size() - 1);
        for (int n = 0; n < 60; ++n) {
            const std::size_t i = pick(rng);
            const double h = 1e-6;
            Image p = render, m = render;
            p.data()[i] += h;
            m.data()[i] -= h;
            const double fd = (loss(p, target, lambda).value - loss(m, target, lambda).value) / (2.0 * h);
            EXPECT_NEAR(lv.d_render.data()[i], fd, 1e-5 * std::max(std::abs(fd), 1e-3)) << "lambda " << lambda;
        }
    }
}

TEST(Loss, ShapeMismatchThrows) {
    EXPECT_THROW(loss(Image(4, 4), Image(4, 5), 0.2), ShapeError);
    EXPECT_THROW(metrics(Image(4, 4), Image(5, 4)), ShapeError);
}

TEST(Metrics, IdenticalAndKnownMse) {
    std::mt19937_64 rng(4);
    const Image a = random_image(rng, 16, 16);
    const Metrics m = metrics(a, a);
    EXPECT_EQ(m.psnr, 99.0);
    EXPECT_NEAR(m.ssim, 1.0, 1e-12);

    Image b(10, 10, {0.5, 0.5, 0.5}), c(10, 10, {0.6, 0.4, 0.6});
    EXPECT_NEAR(psnr(b, c), 20.0, 1e-9);
}

// Direct windowed SSIM of one pixel of a single-channel pair, zero padded.
long double ssim_at(const Image &a, const Image &b, int ch, int px, int py) {
    const auto taps = ssim_taps();
    const int r = kSsimWindow / 2;
    long double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
    for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
            const int x = px + dx, y = py + dy;
            if (x < 0 || y < 0 || x >= a.width() || y >= a.height()) continue;
            const long double w = static_cast<long double>(taps[dx + r]) * taps[dy + r];
            const long double va = a.at(x, y, ch), vb = b.at(x, y, ch);
            ma += w * va;
            mb += w * vb;
            saa += w * va * va;
            sbb += w * vb * vb;
            sab += w * va * vb;
        }
    }
    const long double c1 = 0.01L * 0.01L, c2 = 0.03L * 0.03L;
    const long double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
    return (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
}

long double ssim_oracle(const Image &a, const Image &b) {
    long double sum = 0;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < a.height(); ++y)
            for (int x = 0; x < a.width(); ++x) sum += ssim_at(a, b, c, x, y);
    return sum / (3.0L * a.width() * a.height());
}

TEST(Metrics, SsimGrayVersusBlackMatchesWindowOracle) {
    const Image gray(20, 20, {0.5, 0.5, 0.5}), black(20, 20);
    const double s = ssim(gray, black);
    EXPECT_NEAR(s, static_cast<double>(ssim_oracle(gray, black)), 1e-12);
    // Away from the border only the luminance term is left.
    const double c1 = 1e-4;
    EXPECT_NEAR(static_cast<double>(ssim_at(gray, black, 0, 10, 10)), c1 / (0.25 + c1), 1e-12);
}

TEST(Metrics, SsimMatchesWindowOracleOnRandomPairs) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 3; ++trial) {
        const Image a = random_image(rng, 17, 13), b = random_image(rng, 17, 13);
        EXPECT_NEAR(ssim(a, b), static_cast<double>(ssim_oracle(a, b)), 1e-12);
    }
}

Scene tiny_scene(int M = 2) {
    std::mt19937_64 rng(6);
    return checks::random_scene(rng, {.width = 16, .height = 16, .splats = 3, .M = M});
}

GradientBuffer zero_grads(const Scene &s) {
    GradientBuffer g;
    g.splats.resize(s.splats.size());
    for (std::size_t i = 0; i < s.splats.size(); ++i) g.splats[i].d_c_curve.assign(s.splats[i].c_curve.size(), Vec2{});
    return g;
}

TEST(Adam, ZeroGradientLeavesSceneUnchanged) {
    Scene s = tiny_scene();
    const Scene before = s;
    AdamState st;
    FitConfig cfg;
    for (int i = 0; i < 3; ++i) adam_step(s, zero_grads(s), st, cfg, 16.0);
    EXPECT_EQ(s, before);
}

TEST(Adam, FirstStepIsLearningRateTimesSign) {
    Scene s = tiny_scene();
    const Scene before = s;
    GradientBuffer g = zero_grads(s);
    g.splats[0].d_center.x = 3.0;
    g.splats[0].d_theta = -1e-3;
    g.splats[1].d_raw_opacity = 7.0;
    g.splats[2].d_c_curve[1].y = -0.5;
    AdamState st;
    FitConfig cfg;
    const double spatial = 16.0;
    adam_step(s, g, st, cfg, spatial);
    EXPECT_NEAR(s.splats[0].center.x - before.splats[0].center.x, -cfg.lr_center * spatial, 1e-12);
    EXPECT_NEAR(s.splats[0].theta - before.splats[0].theta, cfg.lr_theta, 1e-12);
    EXPECT_NEAR(s.splats[1].raw_opacity - before.splats[1].raw_opacity, -cfg.lr_raw_opacity, 1e-12);
    EXPECT_NEAR(s.splats[2].c_curve[1].y - before.splats[2].c_curve[1].y, cfg.lr_c_curve * spatial, 1e-12);
    EXPECT_EQ(s.splats[0].center.y, before.splats[0].center.y);
}

TEST(Adam, BaselineFreezesCurves) {
    Scene s = tiny_scene();
    const Scene before = s;
    GradientBuffer g = zero_grads(s);
    for (auto &sg : g.splats)
        for (auto &v : sg.d_c_curve) v = {1.0, -1.0};
    AdamState st;
    FitConfig cfg;
    cfg.baseline = true;
    adam_step(s, g, st, cfg, 16.0);
    for (std::size_t i = 0; i < s.splats.size(); ++i) EXPECT_EQ(s.splats[i].c_curve, before.splats[i].c_curve);
}

TEST(Adam, ColorsStayInUnitRange) {
    Scene s = tiny_scene();
    s.splats[0].color = {0.0, 1.0, 0.5};
    GradientBuffer g = zero_grads(s);
    g.splats[0].d_color = {1.0, -1.0, 0.0};
    AdamState st;
    adam_step(s, g, st, FitConfig{}, 16.0);
    EXPECT_EQ(s.splats[0].color[0], 0.0);
    EXPECT_EQ(s.splats[0].color[1], 1.0);
}

TEST(Adam, RestoredMomentsContinueTheSameTrajectory) {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> n(0.0, 1.0);
    auto random_grads = [&](const Scene &s) {
        GradientBuffer g = zero_grads(s);
        for (auto &sg : g.splats) {
            sg.d_center = {n(rng), n(rng), 0.0};
            sg.d_theta = n(rng);
            sg.d_raw_opacity = n(rng);
            for (auto &v : sg.d_c_curve) v = {n(rng), n(rng)};
        }
        return g;
    };
    std::vector<GradientBuffer> grads;
    const Scene start = tiny_scene();
    for (int i = 0; i < 6; ++i) grads.push_back(random_grads(start));
    FitConfig cfg;

    Scene a = start;
    AdamState sa;
    for (const auto &g : grads) adam_step(a, g, sa, cfg, 16.0);

    Scene b = start;
    AdamState sb;
    for (int i = 0; i < 3; ++i) adam_step(b, grads[i], sb, cfg, 16.0);
    AdamState restored = adam_state_from_json(adam_state_to_json(sb));
    EXPECT_EQ(restored, sb);
    for (int i = 3; i < 6; ++i) adam_step(b, grads[i], restored, cfg, 16.0);
    EXPECT_EQ(a, b);
}

TEST(Densify, CloneCopiesCurvesAndPrunesFaintSplats) {
    Scene s = tiny_scene(3);
    s.splats[2].raw_opacity = logit(0.004);
    DensifyStats stats;
    stats.reset(s.splats.size());
    stats.grad_norm_sum = {1.0, 0.0, 5.0};
    stats.visible = {1, 1, 1};
    AdamState st;
    FitConfig cfg;
    const Scene before = s;
    densify(s, stats, st, cfg, 1);
    // Splat 2 is pruned even though its gradient is large; splat 0 is cloned.
    ASSERT_EQ(s.splats.size(), 3u);
    EXPECT_EQ(s.splats[0], before.splats[0]);
    EXPECT_EQ(s.splats[1], before.splats[1]);
    const Splat &clone = s.splats[2];
    EXPECT_EQ(clone.c_curve, before.splats[0].c_curve);
    EXPECT_EQ(clone.theta, before.splats[0].theta);
    EXPECT_EQ(clone.color, before.splats[0].color);
    const double moved = std::hypot(clone.center.x - before.splats[0].center.x, clone.center.y - before.splats[0].center.y);
    EXPECT_NEAR(moved, 0.1 * std::max(before.splats[0].scale(0), before.splats[0].scale(1)), 1e-12);
    EXPECT_GT(clone.depth_key, before.splats[1].depth_key);
    EXPECT_NO_THROW(validate(s));
}

TEST(Densify, NothingAboveThresholdOnlyPrunes) {
    Scene s = tiny_scene();
    DensifyStats stats;
    stats.reset(s.splats.size());
    AdamState st;
    const Scene before = s;
    densify(s, stats, st, FitConfig{}, 1);
    EXPECT_EQ(s, before);
}

TEST(FitConfig, ValidationAndJson) {
    FitConfig c;
    EXPECT_NO_THROW(validate(c));
    FitConfig bad = c;
    bad.lr_c_curve = 0.0;
    EXPECT_THROW(validate(bad), ConfigError);
    bad = c;
    bad.lambda_ssim = 1.5;
    EXPECT_THROW(validate(bad), ConfigError);
    bad = c;
    bad.M = 0;
    EXPECT_THROW(validate(bad), ConfigError);

    c.iters = 17;
    c.lr_c_curve = 3e-4;
    c.background = {0.1, 0.2, 0.3};
    EXPECT_EQ(fit_config_from_json(fit_config_to_json(c)), c);
    EXPECT_EQ(fit_config_from_json("{\"iters\": 5}").iters, 5);
    EXPECT_THROW(fit_config_from_json("{\"iterations\": 5}"), ConfigError);
    EXPECT_THROW(fit_config_from_json("{\"lambda_ssim\": -1}"), ConfigError);
    EXPECT_THROW(fit_config_from_json("[1, 2]"), ConfigError);
}

// 24x24 target: left third dark red, the rest light blue.
Image edge_target() {
    Image t(24, 24);
    for (int y = 0; y < 24; ++y)
        for (int x = 0; x < 24; ++x) {
            const Rgb c = x < 8 ? Rgb{0.7, 0.1, 0.1} : Rgb{0.2, 0.5, 0.9};
            for (int ch = 0; ch < 3; ++ch) t.at(x, y, ch) = c[ch];
        }
    return t;
}

FitConfig small_config(int iters) {
    FitConfig c;
    c.iters = iters;
    c.splats = 12;
    c.densify_interval = 20;
    c.checkpoint_interval = 10;
    return c;
}

TEST(Fit, ZeroIterationsReturnsInitialScene) {
    const Image target = edge_target();
    const FitConfig cfg = small_config(0);
    const FitResult r = fit(target, cfg);
    Scene init = init_scene(24, 24, cfg.splats, cfg.M, cfg.seed, &target);
    init.background = cfg.background;
    EXPECT_EQ(r.scene, init);
    ASSERT_EQ(r.report.checkpoints.size(), 1u);
    EXPECT_TRUE(r.loss_history.empty());
}

TEST(Fit, DeterministicAcrossRunsAndThreads) {
    const Image target = edge_target();
    const FitConfig cfg = small_config(40);
    set_thread_count(1);
    const FitResult a = fit(target, cfg);
    set_thread_count(4);
    const FitResult b = fit(target, cfg);
    set_thread_count(0);
    EXPECT_EQ(scene_to_json(a.scene), scene_to_json(b.scene));
    EXPECT_EQ(a.loss_history, b.loss_history);
    EXPECT_EQ(report_csv(a.report), report_csv(b.report));
}

TEST(Fit, LossDecreasesAndBaselineKeepsCurves) {
    const Image target = edge_target();
    FitConfig cfg = small_config(200);
    const FitResult r = fit(target, cfg);
    EXPECT_LT(r.loss_history.back(), 0.5 * r.loss_history.front());
    // Median loss over consecutive 50-iteration windows does not increase.
    auto median = [&](int from) {
        std::vector<double> w(r.loss_history.begin() + from, r.loss_history.begin() + from + 50);
        std::nth_element(w.begin(), w.begin() + 25, w.end());
        return w[25];
    };
    for (int from = 50; from + 50 <= 200; from += 50) EXPECT_LE(median(from), median(from - 50));

    cfg.baseline = true;
    const FitResult base = fit(target, cfg);
    Scene init = init_scene(24, 24, cfg.splats, cfg.M, cfg.seed, &target);
    for (const Splat &s : base.scene.splats) {
        // Clones carry an original's curves, so every curve set is one of the initial ones.
        const bool known = std::any_of(init.splats.begin(), init.splats.end(),
                                       [&](const Splat &o) { return o.c_curve == s.c_curve; });
        EXPECT_TRUE(known);
    }
}

TEST(Report, CsvHasNoWallTime) {
    FitReport r;
    r.checkpoints.push_back({0, 0.5, 20.0, 0.9, 12, 3.7});
    EXPECT_EQ(report_csv(r), "iteration,loss,psnr,ssim,splats\n0,0.5,20,0.9,12\n");
}

} // namespace
} // namespace discsplat
