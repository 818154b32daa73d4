// Copyright Contributors to the DiscSplat Project
// SPDX-License-Identifier: Apache-2.0

#include "harness.hpp"

#include "discsplat/bezier.hpp"
#include "discsplat/gradients.hpp"
#include "discsplat/metrics.hpp"
#include "discsplat/rasterizer.hpp"
#include "oracles.hpp"
#include "random_scenes.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>

namespace discsplat::checks {

bool CheckTable::pass() const {
    return std::all_of(rows.begin(), rows.end(), [](const CheckRow &r) { return r.pass(); });
}

std::string CheckTable::format() const {
    std::string out = title + "\n";
    char line[256];
    std::snprintf(line, sizeof line, "%-24s %12s %12s %10s  %s\n", "row", "value", "tolerance", "samples", "result");
    out += line;
    for (const auto &r : rows) {
        std::snprintf(line, sizeof line, "%-24s %12.3e %12.3e %10zu  %s", r.name.c_str(), r.value, r.tolerance,
                      r.samples, r.pass() ? "pass" : "FAIL");
        out += line;
        if (!r.note.empty()) out += "  (" + r.note + ")";
        out += "\n";
    }
    return out;
}

namespace {

// ---------------------------------------------------------------- grad-check

struct Group {
    const char *name;
    std::vector<int> params;
};

const std::vector<Group> &groups() {
    static const std::vector<Group> g{{"center", {0, 1}},
                                      {"theta", {2}},
                                      {"log_scales", {3, 4}},
                                      {"raw_opacity", {5}},
                                      {"color", {6, 7, 8}}};
    return g;
}

double &param(Splat &s, int i) {
    switch (i) {
    case 0: return s.center.x;
    case 1: return s.center.y;
    case 2: return s.theta;
    case 3: return s.log_scales.x;
    case 4: return s.log_scales.y;
    case 5: return s.raw_opacity;
    default: return s.color[i - 6];
    }
}

double analytic(const SplatGradient &g, int i) {
    switch (i) {
    case 0: return g.d_center.x;
    case 1: return g.d_center.y;
    case 2: return g.d_theta;
    case 3: return g.d_log_scales.x;
    case 4: return g.d_log_scales.y;
    case 5: return g.d_raw_opacity;
    default: return g.d_color[i - 6];
    }
}

// Everything that makes the loss non-smooth: which splats are taped where,
// their indicator bits, and the sign of every residual.
struct Signature {
    std::vector<std::uint64_t> records;
    std::vector<signed char> residual_sign;
    friend bool operator==(const Signature &, const Signature &) = default;
};

Signature signature(const RenderTape &tape, const Image &target) {
    Signature s;
    for (const auto &tile : tape.tiles) {
        s.records.push_back(tile.records.size());
        for (const auto &r : tile.records) {
            s.records.push_back((static_cast<std::uint64_t>(r.splat) << 32) | r.gbits);
            s.records.push_back(static_cast<std::uint64_t>(static_cast<std::int64_t>(r.prev)));
        }
    }
    const auto &a = tape.image.data();
    const auto &b = target.data();
    s.residual_sign.resize(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) s.residual_sign[i] = a[i] > b[i] ? 1 : (a[i] < b[i] ? -1 : 0);
    return s;
}

struct Evaluation {
    long double loss = 0.0L;
    Signature sig;
};

Evaluation evaluate(const Scene &scene, const Image &target) {
    const RenderTape tape = render_scene(scene, target.width(), target.height());
    // Mean absolute error summed in long double so the differences see the
    // render, not the rounding of the sum.
    long double sum = 0.0L;
    const auto &a = tape.image.data();
    const auto &b = target.data();
    for (std::size_t i = 0; i < a.size(); ++i) sum += std::abs(static_cast<long double>(a[i]) - b[i]);
    return {sum / a.size(), signature(tape, target)};
}

} // namespace

CheckTable grad_check(const GradCheckOptions &o) {
    // Relative errors are taken against max(|analytic|, |fd|, kFloor): below
    // the floor the central difference is dominated by rounding of the loss.
    constexpr double kFloor = 1e-8;
    std::mt19937_64 rng(o.seed);
    std::uniform_int_distribution<int> count(1, o.max_splats);
    std::uniform_real_distribution<double> pix(0.0, 1.0);

    std::vector<CheckRow> rows;
    std::vector<std::size_t> skipped(groups().size(), 0);
    for (const auto &g : groups()) rows.push_back({g.name, 0.0, o.tolerance, 0, ""});

    for (int n = 0; n < o.scenes; ++n) {
        RandomSceneOptions so;
        so.width = so.height = o.size;
        so.splats = count(rng);
        so.cutting = n % 2 == 1;
        const Scene scene = random_scene(rng, so);
        Image target(o.size, o.size);
        for (auto &v : target.data()) v = pix(rng);

        const auto prepared = prepare(scene, nullptr, o.size, o.size);
        const RenderTape tape = render(prepared, o.size, o.size, scene.background);
        const LossValue lv = loss(tape.image, target, 0.0);
        BackwardOptions bo;
        bo.curve_gradients = false;
        const GradientBuffer grads = backward(scene, nullptr, prepared, tape, lv.d_render, {}, bo).grads;
        const Signature base = signature(tape, target);

        for (std::size_t gi = 0; gi < groups().size(); ++gi) {
            for (std::size_t si = 0; si < scene.splats.size(); ++si) {
                for (int pi : groups()[gi].params) {
                    // Five-point central stencil: the h^2 truncation term of
                    // the two-point rule alone exceeds the tolerance on flat
                    // directions.
                    long double f[4];
                    bool stable = true;
                    const double offsets[4] = {-2.0, -1.0, 1.0, 2.0};
                    for (int k = 0; k < 4 && stable; ++k) {
                        Scene moved = scene;
                        param(moved.splats[si], pi) += offsets[k] * o.step;
                        const Evaluation e = evaluate(moved, target);
                        stable = e.sig == base;
                        f[k] = e.loss;
                    }
                    if (!stable) {
                        ++skipped[gi];
                        continue;
                    }
                    const double fd = static_cast<double>((f[0] - 8.0L * f[1] + 8.0L * f[2] - f[3]) / (12.0L * o.step));
                    const double a = analytic(grads.splats[si], pi);
                    const double err = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), kFloor});
                    rows[gi].value = std::max(rows[gi].value, err);
                    ++rows[gi].samples;
                }
            }
        }
    }
    for (std::size_t gi = 0; gi < rows.size(); ++gi) {
        rows[gi].note = std::to_string(skipped[gi]) + " unstable perturbations skipped";
        if (rows[gi].samples == 0) rows[gi].value = std::numeric_limits<double>::infinity();
    }
    return {"grad-check: analytic vs central differences (relative error)", rows};
}

// ------------------------------------------------------------ implicit-check

CheckTable implicit_check(const ImplicitCheckOptions &o) {
    std::mt19937_64 rng(o.seed);
    struct Family {
        const char *name;
        double extent;
        double offset;
        bool parabola;
    };
    const Family families[] = {{"random extent 64", 64.0, 0.0, false},
                               {"random extent 1", 1.0, 0.0, false},
                               {"extent 1000 far away", 1000.0, 1e4, false},
                               {"parabola", 64.0, 0.0, true}};
    std::vector<CheckRow> rows;
    const int per = std::max(1, o.curves / 4);
    for (const auto &f : families) {
        CheckRow row{f.name, 0.0, o.tolerance, 0, "t in [-1, 2]"};
        std::uniform_real_distribution<double> u(0.0, f.extent);
        for (int n = 0; n < per; ++n) {
            std::array<Vec2, 4> w;
            for (auto &p : w) p = {f.offset + u(rng), f.offset + u(rng)};
            if (f.parabola) {
                // Equal third differences cancel the cubic term.
                w[2] = {(w[3].x + 3.0 * w[1].x - w[0].x) / 3.0, (w[3].y + 3.0 * w[1].y - w[0].y) / 3.0};
            }
            const ImplicitCubic imp = implicitize(CubicBezier{w});
            if (imp.degenerate_line) continue;
            row.value = std::max(row.value, oracle::max_residual_on_curve(
                                                w, [&](double x, double y) { return imp.evaluate(x, y); },
                                                o.samples, -1.0, 2.0));
            ++row.samples;
        }
        rows.push_back(row);
    }
    return {"implicit-check: max |F(B(t))| of the normalized implicit form", rows};
}

// -------------------------------------------------------------- solver-check

namespace {

struct SolverTally {
    std::size_t missed = 0;
    std::size_t spurious = 0;
};

void compare_roots(double a3, double a2, double a1, double a0, double tol, SolverTally &tally) {
    const CubicRoots got = solve_cubic_real(a3, a2, a1, a0);
    const std::vector<double> sure = oracle::bisection_roots(a3, a2, a1, a0);
    std::vector<double> allowed = sure;
    for (const auto &z : oracle::companion_roots(a3, a2, a1, a0)) {
        if (std::abs(z.imag()) <= 1e-6 * std::max(1.0, std::abs(z.real()))) allowed.push_back(z.real());
    }
    auto near = [&](double x, double y) { return std::abs(x - y) <= tol * std::max(1.0, std::abs(y)); };
    for (double w : sure) {
        if (std::none_of(got.roots().begin(), got.roots().end(), [&](double g) { return near(g, w); })) {
            ++tally.missed;
        }
    }
    for (double g : got.roots()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](double w) { return near(g, w); })) ++tally.spurious;
    }
}

} // namespace

CheckTable solver_check(const SolverCheckOptions &o) {
    std::mt19937_64 rng(o.seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0), root(-10.0, 10.0), lg(-3.0, 3.0), gap(-5.0, -2.0);
    struct Family {
        const char *name;
        double share;
    };
    const Family families[] = {{"uniform coefficients", 0.5},
                               {"three real roots", 0.2},
                               {"near-double root", 0.15},
                               {"one real root", 0.1},
                               {"quadratic", 0.05}};
    std::vector<CheckRow> rows;
    for (int fi = 0; fi < 5; ++fi) {
        const int n = std::max(1, static_cast<int>(std::lround(o.sets * families[fi].share)));
        SolverTally tally;
        for (int i = 0; i < n; ++i) {
            double a3 = 0, a2 = 0, a1 = 0, a0 = 0;
            const double k = std::pow(10.0, lg(rng));
            switch (fi) {
            case 0: a3 = u(rng), a2 = u(rng), a1 = u(rng), a0 = u(rng); break;
            case 1:
            case 2: {
                const double r1 = root(rng);
                const double r2 = fi == 1 ? root(rng) : r1 + std::pow(10.0, gap(rng)) * (u(rng) < 0 ? -1 : 1);
                // A near-double pair keeps the third root at least 1 away; tighter
                // clusters are not resolved to the tolerance by double coefficients.
                const double r3 = fi == 1 ? root(rng) : r1 + (1.0 + 9.0 * std::abs(u(rng))) * (u(rng) < 0 ? -1 : 1);
                a3 = k;
                a2 = -k * (r1 + r2 + r3);
                a1 = k * (r1 * r2 + r1 * r3 + r2 * r3);
                a0 = -k * r1 * r2 * r3;
                break;
            }
            case 3: {
                // (t - r) (t^2 + b t + c) with b^2 < 4c
                const double r = root(rng), b = root(rng), c = b * b / 4.0 + 1.0 + std::abs(root(rng));
                a3 = k;
                a2 = k * (b - r);
                a1 = k * (c - r * b);
                a0 = -k * r * c;
                break;
            }
            default: a2 = u(rng), a1 = u(rng), a0 = u(rng); break;
            }
            compare_roots(a3, a2, a1, a0, o.tolerance, tally);
        }
        CheckRow row{families[fi].name, static_cast<double>(tally.missed + tally.spurious), 0.0,
                     static_cast<std::size_t>(n),
                     std::to_string(tally.missed) + " missed, " + std::to_string(tally.spurious) + " spurious"};
        rows.push_back(row);
    }
    char title[96];
    std::snprintf(title, sizeof title, "solver-check: missed + spurious real roots at tolerance %g", o.tolerance);
    return {title, rows};
}

// ------------------------------------------------------------ crossing-check

CheckTable crossing_check(const CrossingCheckOptions &o) {
    std::mt19937_64 rng(o.seed);
    std::uniform_real_distribution<double> u(0.0, 64.0);
    std::uniform_int_distribution<int> pick(0, 3);
    CheckRow row{"random queries", 0.0, o.tolerance, 0, ""};
    std::size_t with_values = 0;
    for (int n = 0; n < o.queries; ++n) {
        std::vector<Vec2> pts(4);
        for (auto &p : pts) p = {u(rng), u(rng)};
        const Vec2 pixel{u(rng), u(rng)};
        const int pi = pick(rng);
        const Axis axis = pick(rng) % 2 ? Axis::y : Axis::x;
        const CrossingSolutions s = crossing_solutions(pts, 0, pi, axis, pixel);
        with_values += !s.values.empty();
        for (double phi : s.values) {
            std::array<Vec2, 4> w{pts[0], pts[1], pts[2], pts[3]};
            w[pi][static_cast<int>(axis)] = phi;
            row.value = std::max(row.value, oracle::distance_to_curve(w, pixel, 2000));
            ++row.samples;
        }
    }
    row.note = std::to_string(with_values) + " of " + std::to_string(o.queries) + " queries had solutions";

    // Worked example: the x^3 graph with w0.x free and pixel (2, 0.125).
    const std::vector<Vec2> graph{{0, 0}, {1.0 / 3, 0}, {2.0 / 3, 0}, {1, 1}};
    const CrossingSolutions ex = crossing_solutions(graph, 0, 0, Axis::x, {2.0, 0.125});
    CheckRow example{"x^3 example phi = 12", 0.0, 1e-9, 1, ""};
    example.value = ex.values.size() == 1 ? std::abs(ex.values[0] - 12.0) : std::numeric_limits<double>::infinity();
    example.note = std::to_string(ex.values.size()) + " value(s)";
    return {"crossing-check: distance from pixel to the curve rebuilt with each phi", {row, example}};
}

} // namespace discsplat::checks
