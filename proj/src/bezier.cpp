// Copyright Contributors to the DiscSplat Project
// SPDX-License-Identifier: Apache-2.0

#include "discsplat/bezier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace discsplat {

std::array<double, 4> bernstein(double t) {
    const double s = 1.0 - t;
    return {s * s * s, 3.0 * s * s * t, 3.0 * s * t * t, t * t * t};
}

Vec2 eval_bezier(const CubicBezier &curve, double t) {
    const auto b = bernstein(t);
    Vec2 out;
    for (int i = 0; i < 4; ++i) {
        out.x += b[i] * curve.points[i].x;
        out.y += b[i] * curve.points[i].y;
    }
    return out;
}

std::array<double, 4> power_basis(double p0, double p1, double p2, double p3) {
    return {p0, 3.0 * (p1 - p0), 3.0 * (p0 - 2.0 * p1 + p2), -p0 + 3.0 * p1 - 3.0 * p2 + p3};
}

RowPoly ImplicitCubic::row(double y) const {
    if (degenerate_line) {
        const auto &l = *degenerate_line;
        return {0.0, 1.0, l.b * y + l.c, l.a, 0.0, 0.0};
    }
    const auto &g = gamma;
    const double v = (y - origin.y) * inv_scale;
    RowPoly r;
    r.origin_x = origin.x;
    r.inv_scale = inv_scale;
    r.c3 = g[kXXX];
    r.c2 = g[kXXY] * v + g[kXX];
    r.c1 = (g[kXYY] * v + g[kXY]) * v + g[kX];
    r.c0 = ((g[kYYY] * v + g[kYY]) * v + g[kY]) * v + g[k0];
    return r;
}

namespace {

// Bivariate polynomial of total degree <= 3; c[i][j] multiplies X^i Y^j.
struct BiPoly {
    std::array<std::array<double, 4>, 4> c{};

    static BiPoly constant(double v) {
        BiPoly p;
        p.c[0][0] = v;
        return p;
    }

    BiPoly operator+(const BiPoly &o) const {
        BiPoly r;
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) r.c[i][j] = c[i][j] + o.c[i][j];
        return r;
    }
    BiPoly operator-(const BiPoly &o) const {
        BiPoly r;
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) r.c[i][j] = c[i][j] - o.c[i][j];
        return r;
    }
    BiPoly operator*(const BiPoly &o) const {
        BiPoly r;
        for (int i = 0; i < 4; ++i)
            for (int j = 0; i + j < 4; ++j) {
                if (c[i][j] == 0.0) continue;
                for (int k = 0; i + k < 4; ++k)
                    for (int l = 0; i + j + k + l < 4; ++l) r.c[i + k][j + l] += c[i][j] * o.c[k][l];
            }
        return r;
    }
};

// Bezoutian of f = x(t) - X and g = y(t) - Y for polynomials of formal degree n.
// Entries are affine in (X, Y); the determinant is the implicit polynomial.
BiPoly bezout_determinant(const std::array<double, 4> &xc, const std::array<double, 4> &yc, int n) {
    std::array<BiPoly, 4> f, g;
    for (int i = 0; i <= n; ++i) {
        f[i] = BiPoly::constant(xc[i]);
        g[i] = BiPoly::constant(yc[i]);
    }
    f[0].c[1][0] = -1.0;
    g[0].c[0][1] = -1.0;

    std::array<std::array<BiPoly, 3>, 3> b{};
    for (int i = 0; i <= n; ++i) {
        for (int j = i + 1; j <= n; ++j) {
            const BiPoly m = f[i] * g[j] - f[j] * g[i];
            for (int k = 0; k <= j - i - 1; ++k) {
                b[i + k][j - 1 - k] = b[i + k][j - 1 - k] - m;
            }
        }
    }
    if (n == 2) {
        return b[0][0] * b[1][1] - b[0][1] * b[1][0];
    }
    const BiPoly minor0 = b[1][1] * b[2][2] - b[1][2] * b[2][1];
    const BiPoly minor1 = b[1][0] * b[2][2] - b[1][2] * b[2][0];
    const BiPoly minor2 = b[1][0] * b[2][1] - b[1][1] * b[2][0];
    return b[0][0] * minor0 - b[0][1] * minor1 + b[0][2] * minor2;
}

double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }

} // namespace

ImplicitCubic implicitize(const CubicBezier &curve) {
    const auto &p = curve.points;
    for (const auto &q : p) {
        if (!std::isfinite(q.x) || !std::isfinite(q.y)) {
            throw std::invalid_argument("implicitize: non-finite control point");
        }
    }

    double spread = 0.0;
    int far_a = 0;
    int far_b = 0;
    for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j) {
            const double d = norm(p[j] - p[i]);
            if (d > spread) {
                spread = d;
                far_a = i;
                far_b = j;
            }
        }
    const double magnitude = std::max({1.0, std::abs(p[0].x), std::abs(p[0].y)});
    if (spread <= 1e-12 * magnitude) {
        throw DegenerateCurveError("implicitize: all control points coincide");
    }

    // Collinearity is measured against the chord w0 -> w3, or against the
    // widest pair when the curve is closed (w0 == w3).
    Vec2 chord_start = p[0];
    Vec2 chord = p[3] - p[0];
    double chord_len = norm(chord);
    if (chord_len <= 1e-12 * spread) {
        chord_start = p[far_a];
        chord = p[far_b] - p[far_a];
        chord_len = spread;
    }
    const Vec2 dir = (1.0 / chord_len) * chord;
    double max_off = 0.0;
    for (const auto &q : p) max_off = std::max(max_off, std::abs(cross(dir, q - chord_start)));

    ImplicitCubic out;
    if (max_off <= kCollinearTolerance * chord_len) {
        LineForm line{-dir.y, dir.x, 0.0};
        line.c = -(line.a * chord_start.x + line.b * chord_start.y);
        out.degenerate_line = line;
        return out;
    }

    Vec2 centroid = 0.25 * (p[0] + p[1] + p[2] + p[3]);
    double scale = 0.0;
    for (const auto &q : p) scale = std::max(scale, norm(q - centroid));
    out.origin = centroid;
    out.inv_scale = 1.0 / scale;

    std::array<Vec2, 4> q;
    for (int i = 0; i < 4; ++i) q[i] = out.inv_scale * (p[i] - centroid);
    const auto xc = power_basis(q[0].x, q[1].x, q[2].x, q[3].x);
    const auto yc = power_basis(q[0].y, q[1].y, q[2].y, q[3].y);

    // A curve whose cubic terms cancel is a parabola; the degree-3 Bezoutian
    // vanishes identically there, so eliminate at degree 2.
    const int degree = std::hypot(xc[3], yc[3]) < 1e-10 ? 2 : 3;
    const BiPoly det = bezout_determinant(xc, yc, degree);

    auto &g = out.gamma;
    g[kXXX] = det.c[3][0];
    g[kXXY] = det.c[2][1];
    g[kXYY] = det.c[1][2];
    g[kYYY] = det.c[0][3];
    g[kXX] = det.c[2][0];
    g[kXY] = det.c[1][1];
    g[kYY] = det.c[0][2];
    g[kX] = det.c[1][0];
    g[kY] = det.c[0][1];
    g[k0] = det.c[0][0];

    double max_abs = 0.0;
    for (double v : g) max_abs = std::max(max_abs, std::abs(v));
    if (!(max_abs > 0.0)) {
        throw DegenerateCurveError("implicitize: vanishing implicit form");
    }
    for (double &v : g) v /= max_abs;
    return out;
}

int classify_point(const ImplicitCubic &imp, Vec2 p) { return imp.evaluate(p.x, p.y) > 0.0 ? 1 : 0; }

int indicator(std::span<const ImplicitCubic> imps, Vec2 p) {
    int g = 1;
    for (const auto &imp : imps) g *= classify_point(imp, p);
    return g;
}

namespace {

double eval_poly(const std::array<double, 4> &c, double t) { return ((c[3] * t + c[2]) * t + c[1]) * t + c[0]; }

double eval_deriv(const std::array<double, 4> &c, double t) { return (3.0 * c[3] * t + 2.0 * c[2]) * t + c[1]; }

// Newton steps that are kept only while the residual shrinks.
double polish(const std::array<double, 4> &c, double t) {
    double best = t;
    double best_res = std::abs(eval_poly(c, t));
    for (int it = 0; it < 4 && best_res > 0.0; ++it) {
        const double d = eval_deriv(c, best);
        if (d == 0.0 || !std::isfinite(d)) break;
        const double next = best - eval_poly(c, best) / d;
        const double res = std::abs(eval_poly(c, next));
        if (!(res < best_res)) break;
        best = next;
        best_res = res;
    }
    return best;
}

int solve_quadratic(double a, double b, double c, double *out) {
    // a t^2 + b t + c, a != 0
    const double disc = b * b - 4.0 * a * c;
    if (disc < 0.0) return 0;
    if (disc == 0.0) {
        out[0] = -b / (2.0 * a);
        return 1;
    }
    const double sq = std::sqrt(disc);
    const double qv = -0.5 * (b + std::copysign(sq, b));
    out[0] = qv / a;
    out[1] = qv != 0.0 ? c / qv : -out[0];
    return 2;
}

int solve_monic_cubic(double b, double c, double d, double *out) {
    // t^3 + b t^2 + c t + d; substitute t = s - b/3.
    const double shift = b / 3.0;
    const double p = c - b * shift;
    const double q = 2.0 * shift * shift * shift - c * shift + d;
    const double half_q = 0.5 * q;
    const double third_p = p / 3.0;
    const double disc = half_q * half_q + third_p * third_p * third_p;
    if (disc > 0.0) {
        const double a = -std::copysign(std::cbrt(std::abs(half_q) + std::sqrt(disc)), half_q);
        const double bb = a != 0.0 ? -third_p / a : 0.0;
        out[0] = a + bb - shift;
        return 1;
    }
    if (third_p == 0.0) {
        out[0] = -shift;
        return 1;
    }
    const double r = std::sqrt(-third_p);
    const double cos_arg = std::clamp(-half_q / (r * r * r), -1.0, 1.0);
    const double theta = std::acos(cos_arg) / 3.0;
    constexpr double kTwoThirdsPi = 2.0 * std::numbers::pi / 3.0;
    out[0] = 2.0 * r * std::cos(theta) - shift;
    out[1] = 2.0 * r * std::cos(theta - kTwoThirdsPi) - shift;
    out[2] = 2.0 * r * std::cos(theta + kTwoThirdsPi) - shift;
    return 3;
}

} // namespace

CubicRoots solve_cubic_real(double a3, double a2, double a1, double a0) {
    CubicRoots out;
    const double scale = std::max({std::abs(a3), std::abs(a2), std::abs(a1), std::abs(a0)});
    if (scale == 0.0) {
        out.degeneracy = Degeneracy::constant;
        out.identically_zero = true;
        return out;
    }
    const std::array<double, 4> c{a0 / scale, a1 / scale, a2 / scale, a3 / scale};

    std::array<double, 3> raw{};
    int n = 0;
    if (std::abs(c[3]) >= kLeadingCoefficientCutoff) {
        out.degeneracy = Degeneracy::cubic;
        n = solve_monic_cubic(c[2] / c[3], c[1] / c[3], c[0] / c[3], raw.data());
        // A near-double root can be lost to rounding in the discriminant; the
        // critical points of the cubic recover it.
        if (n == 1) {
            std::array<double, 2> crit{};
            const int nc = solve_quadratic(3.0 * c[3], 2.0 * c[2], c[1], crit.data());
            for (int i = 0; i < nc && n < 3; ++i) {
                const double t = polish(c, crit[i]);
                const double tol = 1e-12 * std::max(1.0, std::abs(t) * std::abs(t) * std::abs(t));
                if (std::abs(eval_poly(c, t)) <= tol) raw[n++] = t;
            }
        }
    } else if (std::abs(c[2]) >= kLeadingCoefficientCutoff) {
        out.degeneracy = Degeneracy::quadratic;
        n = solve_quadratic(c[2], c[1], c[0], raw.data());
    } else if (std::abs(c[1]) >= kLeadingCoefficientCutoff) {
        out.degeneracy = Degeneracy::linear;
        raw[0] = -c[0] / c[1];
        n = 1;
    } else {
        out.degeneracy = Degeneracy::constant;
        if (std::abs(c[0]) < kLeadingCoefficientCutoff) out.identically_zero = true;
        return out;
    }

    for (int i = 0; i < n; ++i) raw[i] = polish(c, raw[i]);
    std::sort(raw.begin(), raw.begin() + n);
    for (int i = 0; i < n; ++i) {
        if (!std::isfinite(raw[i])) continue;
        if (out.count > 0 && std::abs(raw[i] - out.values[out.count - 1]) < kRootDedupTolerance) continue;
        out.values[out.count++] = raw[i];
    }
    return out;
}

namespace detail {

CubicRoots crossing_parameters(const std::array<Vec2, 4> &points, Axis axis, Vec2 pixel) {
    const int other = axis == Axis::x ? 1 : 0;
    auto c = power_basis(points[0][other], points[1][other], points[2][other], points[3][other]);
    c[0] -= pixel[other];
    return solve_cubic_real(c[3], c[2], c[1], c[0]);
}

int phi_candidates_from_basis(const std::array<Vec2, 4> &points, int point_index, Axis axis, Vec2 pixel,
                              std::span<const std::array<double, 4>> basis, std::array<double, 3> &out) {
    const int a = static_cast<int>(axis);
    int n = 0;
    for (const auto &b : basis) {
        if (std::abs(b[point_index]) < kBernsteinCutoff) continue;
        double rest = 0.0;
        for (int j = 0; j < 4; ++j) {
            if (j != point_index) rest += b[j] * points[j][a];
        }
        const double phi = (pixel[a] - rest) / b[point_index];
        if (!std::isfinite(phi)) continue;
        // Far along the curve the sums above cancel huge terms; drop the
        // crossing when double rounding alone could move it by the cutoff.
        double mag_a = std::abs(b[point_index] * phi);
        double mag_o = 0.0;
        for (int j = 0; j < 4; ++j) {
            if (j != point_index) mag_a += std::abs(b[j] * points[j][a]);
            mag_o += std::abs(b[j] * points[j][1 - a]);
        }
        if (std::numeric_limits<double>::epsilon() * std::max(mag_a, mag_o) > kCrossingNoiseCutoff) continue;
        out[n++] = phi;
    }
    std::sort(out.begin(), out.begin() + n);
    return n;
}

int phi_candidates(const std::array<Vec2, 4> &points, int point_index, Axis axis, Vec2 pixel,
                   std::span<const double> t_roots, std::array<double, 3> &out) {
    std::array<std::array<double, 4>, 3> basis;
    const std::size_t n = std::min<std::size_t>(t_roots.size(), 3);
    for (std::size_t i = 0; i < n; ++i) basis[i] = bernstein(t_roots[i]);
    return phi_candidates_from_basis(points, point_index, axis, pixel, {basis.data(), n}, out);
}

NearestCrossing nearest_crossing(std::span<const double> values, int count, double current) {
    NearestCrossing r;
    for (int i = 0; i < count; ++i) {
        const double v = values[i];
        if (v < current) {
            if (!r.has_left || v > r.left) r.left = v;
            r.has_left = true;
        } else if (v > current) {
            if (!r.has_right || v < r.right) r.right = v;
            r.has_right = true;
        }
    }
    return r;
}

} // namespace detail

CrossingSolutions crossing_solutions(std::span<const Vec2> curve_points, int curve_index, int point_index,
                                     Axis axis, Vec2 pixel) {
    if (point_index < 0 || point_index > 3 || curve_index < 0 ||
        static_cast<std::size_t>(4 * curve_index + 3) >= curve_points.size()) {
        throw std::out_of_range("crossing_solutions: index out of range");
    }
    std::array<Vec2, 4> pts;
    for (int i = 0; i < 4; ++i) pts[i] = curve_points[4 * curve_index + i];
    const double current = pts[point_index][static_cast<int>(axis)];

    CrossingSolutions out;
    const CubicRoots t_roots = detail::crossing_parameters(pts, axis, pixel);
    if (t_roots.identically_zero) return out;

    std::array<double, 3> phis{};
    const int n = detail::phi_candidates(pts, point_index, axis, pixel, t_roots.roots(), phis);
    // A candidate equal to the current value needs no move; it belongs to neither side.
    for (int i = 0; i < n; ++i) {
        if (phis[i] != current) out.values.push_back(phis[i]);
    }
    const auto near = detail::nearest_crossing(phis, n, current);
    if (near.has_left) out.nearest_left = near.left;
    if (near.has_right) out.nearest_right = near.right;
    if (near.has_left && near.has_right) {
        out.side = CrossingSide::both_sides;
    } else if (near.has_left) {
        out.side = CrossingSide::single_left;
    } else if (near.has_right) {
        out.side = CrossingSide::single_right;
    }
    return out;
}

} // namespace discsplat
