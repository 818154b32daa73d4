// Copyright Contributors to the DiscSplat Project
// SPDX-License-Identifier: Apache-2.0

// Independent reference computations used by the tests and the check harnesses.
// Nothing here calls into the code paths these oracles are meant to check,
// except that the blend oracle shares det_exp and footprint_power so that its
// comparison with the rasterizer can be bit-exact.

#pragma once

#include "discsplat/bezier.hpp"
#include "discsplat/rasterizer.hpp"
#include "discsplat/simd/kernels.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <vector>

namespace discsplat::oracle {

/// Direct Bernstein evaluation, written out longhand.
inline Vec2 bezier_point(const std::array<Vec2, 4> &w, double t) {
    const double s = 1.0 - t;
    const double b0 = s * s * s;
    const double b1 = 3.0 * s * s * t;
    const double b2 = 3.0 * s * t * t;
    const double b3 = t * t * t;
    return {b0 * w[0].x + b1 * w[1].x + b2 * w[2].x + b3 * w[3].x,
            b0 * w[0].y + b1 * w[1].y + b2 * w[2].y + b3 * w[3].y};
}

/// Largest |F(B(t))| over n uniform samples of t in [lo, hi].
template <class F>
double max_residual_on_curve(const std::array<Vec2, 4> &w, F &&implicit, int n = 200, double lo = -2.0,
                             double hi = 3.0) {
    double worst = 0.0;
    for (int i = 0; i < n; ++i) {
        const double t = lo + (hi - lo) * i / (n - 1);
        const Vec2 p = bezier_point(w, t);
        worst = std::max(worst, std::abs(implicit(p.x, p.y)));
    }
    return worst;
}

/// Distance from `p` to the unbounded curve, in long double. Samples t
/// uniformly on [-4, 4] and log-spaced out to |t| = 1e8, then bisects the
/// parameters where either coordinate meets the pixel's.
inline double distance_to_curve(const std::array<Vec2, 4> &w, Vec2 p, int samples = 20000) {
    using R = long double;
    auto dist = [&](R t) {
        const R s = 1.0L - t;
        const R b0 = s * s * s, b1 = 3.0L * s * s * t, b2 = 3.0L * s * t * t, b3 = t * t * t;
        const R x = b0 * w[0].x + b1 * w[1].x + b2 * w[2].x + b3 * w[3].x;
        const R y = b0 * w[0].y + b1 * w[1].y + b2 * w[2].y + b3 * w[3].y;
        return std::hypot(x - static_cast<R>(p.x), y - static_cast<R>(p.y));
    };
    std::vector<R> grid;
    grid.reserve(3 * static_cast<std::size_t>(samples) + 3);
    for (int i = 0; i <= samples; ++i) grid.push_back(-4.0L + 8.0L * i / samples);
    for (int i = 1; i <= samples; ++i) {
        const R m = 4.0L * std::pow(2.5e7L, static_cast<R>(i) / samples);
        grid.push_back(m);
        grid.push_back(-m);
    }
    std::sort(grid.begin(), grid.end());
    std::vector<R> d(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) d[i] = dist(grid[i]);

    R best = std::numeric_limits<R>::infinity();
    for (R v : d) best = std::min(best, v);

    // Bisect every sign change of x(t) - p.x and y(t) - p.y; at a root the
    // distance is the gap along the other axis.
    auto coord = [&](R t, int axis) {
        const R s = 1.0L - t;
        const R b0 = s * s * s, b1 = 3.0L * s * s * t, b2 = 3.0L * s * t * t, b3 = t * t * t;
        return b0 * w[0][axis] + b1 * w[1][axis] + b2 * w[2][axis] + b3 * w[3][axis] - static_cast<R>(p[axis]);
    };
    for (int axis = 0; axis < 2; ++axis) {
        R prev = coord(grid[0], axis);
        for (std::size_t i = 1; i < grid.size(); ++i) {
            const R cur = coord(grid[i], axis);
            if ((prev < 0) != (cur < 0) || cur == 0) {
                R lo = grid[i - 1], hi = grid[i], flo = prev;
                for (int it = 0; it < 200; ++it) {
                    const R mid = 0.5L * (lo + hi);
                    if (mid == lo || mid == hi) break;
                    const R fm = coord(mid, axis);
                    if ((fm < 0) == (flo < 0)) {
                        lo = mid;
                        flo = fm;
                    } else {
                        hi = mid;
                    }
                }
                for (R t : {lo, hi}) best = std::min(best, std::abs(coord(t, 1 - axis)));
            }
            prev = cur;
        }
    }
    return static_cast<double>(best);
}

/// Real roots of a3 t^3 + a2 t^2 + a1 t + a0 inside [-limit, limit].
/// The line is split at the critical points (monotone pieces) and at a dense
/// uniform grid; each sign change is bisected to machine precision.
inline std::vector<double> bisection_roots(double a3, double a2, double a1, double a0, double limit = 1e6,
                                           int grid = 2000) {
    auto f = [&](double t) {
        // long double Horner to keep the oracle's sign decisions sharp
        long double v = a3;
        v = v * t + a2;
        v = v * t + a1;
        v = v * t + a0;
        return v;
    };
    std::vector<double> knots;
    for (int i = 0; i <= grid; ++i) knots.push_back(-limit + 2.0 * limit * i / grid);
    // critical points: 3 a3 t^2 + 2 a2 t + a1 = 0
    const double qa = 3.0 * a3, qb = 2.0 * a2, qc = a1;
    if (qa != 0.0) {
        const double disc = qb * qb - 4.0 * qa * qc;
        if (disc >= 0.0) {
            knots.push_back((-qb - std::sqrt(disc)) / (2.0 * qa));
            knots.push_back((-qb + std::sqrt(disc)) / (2.0 * qa));
        }
    } else if (qb != 0.0) {
        knots.push_back(-qc / qb);
    }
    std::vector<double> ks;
    for (double k : knots)
        if (k >= -limit && k <= limit && std::isfinite(k)) ks.push_back(k);
    std::sort(ks.begin(), ks.end());

    std::vector<double> roots;
    for (std::size_t i = 0; i + 1 < ks.size(); ++i) {
        double lo = ks[i], hi = ks[i + 1];
        long double flo = f(lo), fhi = f(hi);
        if (flo == 0.0L) {
            roots.push_back(lo);
            continue;
        }
        if ((flo < 0) == (fhi < 0) || fhi == 0.0L) continue;
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (mid == lo || mid == hi) break;
            const long double fm = f(mid);
            if ((fm < 0) == (flo < 0)) {
                lo = mid;
                flo = fm;
            } else {
                hi = mid;
            }
        }
        roots.push_back(0.5 * (lo + hi));
    }
    if (!ks.empty() && f(ks.back()) == 0.0L) roots.push_back(ks.back());
    std::sort(roots.begin(), roots.end());
    roots.erase(std::unique(roots.begin(), roots.end()), roots.end());
    return roots;
}

/// Eigenvalues of the companion matrix of the (trimmed) polynomial.
inline std::vector<std::complex<double>> companion_roots(double a3, double a2, double a1, double a0) {
    std::vector<double> c{a0, a1, a2, a3};
    const double scale = std::max({std::abs(a0), std::abs(a1), std::abs(a2), std::abs(a3)});
    while (c.size() > 1 && std::abs(c.back()) <= 1e-12 * scale) c.pop_back();
    const int n = static_cast<int>(c.size()) - 1;
    if (n <= 0) return {};
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    for (int i = 1; i < n; ++i) m(i, i - 1) = 1.0;
    for (int i = 0; i < n; ++i) m(i, n - 1) = -c[i] / c[n];
    Eigen::EigenSolver<Eigen::MatrixXd> es(m, false);
    std::vector<std::complex<double>> out;
    for (int i = 0; i < n; ++i) out.push_back(es.eigenvalues()(i));
    return out;
}

/// Per-pixel front-to-back blend over every splat, no tiling and no bounding
/// boxes. With `use_curves` the weight is zeroed where any implicit curve is
/// not strictly positive at the pixel center.
inline Image reference_blend(const std::vector<ProjectedSplat> &splats, int width, int height, const Rgb &background,
                             bool use_curves, double cutoff = 1.0 / 255.0, double t_min = 1e-4) {
    Image out(width, height);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const double px = x + 0.5, py = y + 0.5;
            Rgb c{0.0, 0.0, 0.0};
            double t = 1.0;
            for (const auto &s : splats) {
                if (t < t_min) break;
                const double w = s.alpha * simd::det_exp(simd::footprint_power(s.footprint(), px, py));
                if (w < cutoff) continue;
                double g = 1.0;
                if (use_curves) {
                    for (const auto &imp : s.curves) {
                        if (!(imp.evaluate(px, py) > 0.0)) g = 0.0;
                    }
                }
                const double beta = w * g;
                for (int k = 0; k < 3; ++k) c[k] += (s.color[k] * beta) * t;
                t = t * (1.0 - beta);
            }
            for (int k = 0; k < 3; ++k) out.at(x, y, k) = c[k] + t * background[k];
        }
    }
    return out;
}

} // namespace discsplat::oracle
