// Copyright Contributors to the DiscSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "discsplat/types.hpp"

#include <array>

namespace discsplat {

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;
inline constexpr double kPsnrCap = 99.0;

/// Normalized 1D Gaussian taps; the 2D window is their outer product.
std::array<double, kSsimWindow> ssim_taps();

/// Mean squared error over all pixels and channels.
double mse(const Image &a, const Image &b);

/// 10 log10(1 / MSE), or kPsnrCap when MSE < 1e-10.
double psnr(const Image &a, const Image &b);

/// Mean SSIM over pixels and channels. Local statistics use the Gaussian
/// window with zero padding outside the image.
double ssim(const Image &a, const Image &b);

struct Metrics {
    double psnr = 0.0;
    double ssim = 0.0;
};

/// Throws ShapeError on a size mismatch.
Metrics metrics(const Image &render, const Image &target);

/// ssim(render, target) and its exact gradient with respect to `render`.
double ssim_with_gradient(const Image &render, const Image &target, Image &d_render);

struct LossValue {
    double value = 0.0;
    double l1 = 0.0;
    double ssim = 0.0;
    Image d_render;
};

/// (1 - lambda) * L1 + lambda * (1 - SSIM), L1 averaged over pixels and channels.
LossValue loss(const Image &render, const Image &target, double lambda_ssim);

} // namespace discsplat
