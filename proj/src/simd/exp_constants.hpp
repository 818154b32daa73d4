// Copyright Contributors to the DiscSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

namespace discsplat::simd::exp_constants {

inline constexpr double kMinArg = -708.0;
inline constexpr double kMaxArg = 708.0;
inline constexpr double kLog2e = 1.4426950408889634074;
// 1.5 * 2^52: adding and subtracting rounds to the nearest integer.
inline constexpr double kRoundMagic = 6755399441055744.0;
// ln 2 split so that k * kLn2Hi is exact for |k| < 2^11.
inline constexpr double kLn2Hi = 6.93147180369123816490e-01;
inline constexpr double kLn2Lo = 1.90821492927058770002e-10;

// Taylor coefficients 1/13!, 1/12!, ..., 1/1!, 1/0! for Horner evaluation;
// |r| <= ln2 / 2 keeps the truncation error below 1e-17.
inline constexpr int kTaylorTerms = 14;
inline constexpr double kTaylor[kTaylorTerms] = {
    1.0 / 6227020800.0, 1.0 / 479001600.0, 1.0 / 39916800.0, 1.0 / 3628800.0, 1.0 / 362880.0,
    1.0 / 40320.0,      1.0 / 5040.0,      1.0 / 720.0,      1.0 / 120.0,     1.0 / 24.0,
    1.0 / 6.0,          0.5,               1.0,              1.0,
};

} // namespace discsplat::simd::exp_constants
