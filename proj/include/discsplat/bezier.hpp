// Copyright Contributors to the DiscSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "discsplat/types.hpp"

#include <array>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace discsplat {

/// Cubic Bezier with four ordered control points in image-plane units.
/// The parameter t is unrestricted: the whole polynomial curve is the boundary.
struct CubicBezier {
    std::array<Vec2, 4> points{};
};

/// Bernstein basis (1-t)^3, 3(1-t)^2 t, 3(1-t) t^2, t^3.
std::array<double, 4> bernstein(double t);

Vec2 eval_bezier(const CubicBezier &curve, double t);

/// Power-basis coefficients c0 + c1 t + c2 t^2 + c3 t^3 of one coordinate.
std::array<double, 4> power_basis(double p0, double p1, double p2, double p3);

/// Cubic in x for a fixed row y. Evaluation order is fixed so every caller
/// (point classification, scalar and SIMD kernels) produces identical bits.
struct RowPoly {
    double origin_x = 0.0;
    double inv_scale = 1.0;
    double c0 = 0.0;
    double c1 = 0.0;
    double c2 = 0.0;
    double c3 = 0.0;

    double eval(double x) const {
        const double u = (x - origin_x) * inv_scale;
        return ((c3 * u + c2) * u + c1) * u + c0;
    }
};

/// Signed line a x + b y + c; positive to the left of the w0 -> w3 direction.
struct LineForm {
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;
};

/// Coefficient order in ImplicitCubic::gamma.
enum ImplicitTerm : int { kXXX = 0, kXXY, kXYY, kYYY, kXX, kXY, kYY, kX, kY, k0 };

/// Implicit form of a cubic Bezier. gamma is expressed in the curve's
/// normalized frame u = (x - origin.x) * inv_scale, v = (y - origin.y) * inv_scale
/// and scaled so that max |gamma_i| == 1. Near-collinear curves carry a
/// degenerate_line instead and gamma is unused.
struct ImplicitCubic {
    std::array<double, 10> gamma{};
    Vec2 origin{};
    double inv_scale = 1.0;
    std::optional<LineForm> degenerate_line;

    RowPoly row(double y) const;
    double evaluate(double x, double y) const { return row(y).eval(x); }
};

/// All four control points coincide; no boundary can be derived.
class DegenerateCurveError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

ImplicitCubic implicitize(const CubicBezier &curve);

/// Single-curve indicator: 1 iff the implicit value is strictly positive.
int classify_point(const ImplicitCubic &imp, Vec2 p);

/// Product of the single-curve indicators.
int indicator(std::span<const ImplicitCubic> imps, Vec2 p);

enum class Degeneracy { cubic, quadratic, linear, constant };

struct CubicRoots {
    std::array<double, 3> values{};
    int count = 0;
    Degeneracy degeneracy = Degeneracy::cubic;
    /// Every coefficient is zero: all t are solutions. Distinct from "no roots".
    bool identically_zero = false;

    std::span<const double> roots() const { return {values.data(), static_cast<std::size_t>(count)}; }
};

/// Real roots of a3 t^3 + a2 t^2 + a1 t + a0, ascending and deduplicated.
CubicRoots solve_cubic_real(double a3, double a2, double a1, double a0);

enum class Axis { x = 0, y = 1 };

enum class CrossingSide { empty, single_left, single_right, both_sides };

struct CrossingSolutions {
    std::vector<double> values;
    CrossingSide side = CrossingSide::empty;
    std::optional<double> nearest_left;
    std::optional<double> nearest_right;
};

/// Values phi of control coordinate points[4 * curve_index + point_index][axis]
/// for which the curve passes through `pixel`.
CrossingSolutions crossing_solutions(std::span<const Vec2> curve_points, int curve_index, int point_index,
                                     Axis axis, Vec2 pixel);

namespace detail {

/// Allocation-free core of crossing_solutions. `t_roots` are the roots of the
/// other axis equation; writes up to three phi values and returns the count.
int phi_candidates(const std::array<Vec2, 4> &points, int point_index, Axis axis, Vec2 pixel,
                   std::span<const double> t_roots, std::array<double, 3> &out);

/// Same, with the Bernstein basis of each root already evaluated.
int phi_candidates_from_basis(const std::array<Vec2, 4> &points, int point_index, Axis axis, Vec2 pixel,
                              std::span<const std::array<double, 4>> basis, std::array<double, 3> &out);

/// Roots in t of other_axis(B(t)) == pixel[other_axis].
CubicRoots crossing_parameters(const std::array<Vec2, 4> &points, Axis axis, Vec2 pixel);

struct NearestCrossing {
    bool has_left = false;
    bool has_right = false;
    double left = 0.0;
    double right = 0.0;
};

NearestCrossing nearest_crossing(std::span<const double> values, int count, double current);

} // namespace detail

inline constexpr double kCollinearTolerance = 1e-6;
inline constexpr double kRootDedupTolerance = 1e-9;
inline constexpr double kLeadingCoefficientCutoff = 1e-12;
inline constexpr double kBernsteinCutoff = 1e-8;
/// Crossings whose position double rounding can shift by more than this
/// (pixels) are dropped from S_phi.
inline constexpr double kCrossingNoiseCutoff = 1e-6;

} // namespace discsplat
