// Copyright Contributors to the DiscSplat Project
// SPDX-License-Identifier: Apache-2.0

// Data-parallel inner loops of the rasterizer. Every kernel has a scalar
// reference and SIMD variants that must produce bit-identical results; the
// variant is selected once at startup (DISCSPLAT_SIMD=scalar|avx2|auto).

#pragma once

#include "discsplat/bezier.hpp"

#include <cstdint>
#include <span>
#include <string_view>

namespace discsplat::simd {

enum class Isa { scalar, avx2 };

std::string_view to_string(Isa isa);

/// Per-splat constants of the Gaussian footprint.
struct FootprintParams {
    double mean_x = 0.0;
    double mean_y = 0.0;
    double inv_xx = 0.0; // inverse covariance entries
    double inv_xy = 0.0;
    double inv_yy = 0.0;
};

/// Evaluates one splat on `count` consecutive pixel centers (x0 + i, y):
///   gauss[i] = exp(-0.5 d^T inv d)
///   gbits[i] = bit k set iff curves[k].eval(x0 + i) > 0
/// `curves` are the per-row polynomials of the splat's implicit curves.
using RowKernelFn = void (*)(const FootprintParams &fp, std::span<const RowPoly> curves, double x0, double y,
                             int count, double *gauss, std::uint32_t *gbits);

/// Deterministic exp built only from +, *, and exponent-bit assembly, so the
/// scalar and vector versions agree bit for bit. Input clamped to [-708, 708].
double det_exp(double x);

/// Gaussian exponent -0.5 d^T inv d in the fixed operation order the kernels use.
inline double footprint_power(const FootprintParams &fp, double x, double y) {
    const double dx = x - fp.mean_x;
    const double dy = y - fp.mean_y;
    const double a = (fp.inv_xx * dx) * dx;
    const double b = (fp.inv_yy * dy) * dy;
    const double c = (fp.inv_xy * dx) * dy;
    return -0.5 * (a + b) - c;
}

void row_kernel_scalar(const FootprintParams &fp, std::span<const RowPoly> curves, double x0, double y, int count,
                       double *gauss, std::uint32_t *gbits);
void exp_batch_scalar(const double *in, double *out, int count);

#if defined(__x86_64__) || defined(_M_X64)
void row_kernel_avx2(const FootprintParams &fp, std::span<const RowPoly> curves, double x0, double y, int count,
                     double *gauss, std::uint32_t *gbits);
void exp_batch_avx2(const double *in, double *out, int count);
#endif

bool isa_supported(Isa isa);
Isa active_isa();
/// Forces a variant (tests, benchmarks). Throws if the CPU lacks it.
void set_active_isa(Isa isa);

RowKernelFn row_kernel(Isa isa);
inline RowKernelFn row_kernel() { return row_kernel(active_isa()); }

void exp_batch(Isa isa, const double *in, double *out, int count);

} // namespace discsplat::simd
