// Copyright Contributors to the DiscSplat Project
// SPDX-License-Identifier: Apache-2.0

#include "discsplat/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace discsplat {

std::array<double, kSsimWindow> ssim_taps() {
    std::array<double, kSsimWindow> w{};
    double sum = 0.0;
    for (int i = 0; i < kSsimWindow; ++i) {
        const double d = i - kSsimWindow / 2;
        w[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
        sum += w[i];
    }
    for (auto &v : w) v /= sum;
    return w;
}

namespace {

void require_same_shape(const Image &a, const Image &b, const char *what) {
    if (!a.same_shape(b)) throw ShapeError(std::string(what) + ": image sizes differ");
}

// Single-channel plane, row major.
struct Plane {
    int w = 0;
    int h = 0;
    std::vector<double> v;
    Plane(int w_, int h_) : w(w_), h(h_), v(static_cast<std::size_t>(w_) * h_, 0.0) {}
    double &at(int x, int y) { return v[static_cast<std::size_t>(y) * w + x]; }
    double at(int x, int y) const { return v[static_cast<std::size_t>(y) * w + x]; }
};

// Zero-padded "same" Gaussian filtering. The window is symmetric, so this is
// also its own adjoint.
Plane blur(const Plane &in) {
    static const auto taps = ssim_taps();
    constexpr int r = kSsimWindow / 2;
    Plane tmp(in.w, in.h), out(in.w, in.h);
    for (int y = 0; y < in.h; ++y) {
        for (int x = 0; x < in.w; ++x) {
            const int k0 = std::max(-r, -x);
            const int k1 = std::min(r, in.w - 1 - x);
            const double *row = &in.v[static_cast<std::size_t>(y) * in.w + x];
            double s = 0.0;
            for (int k = k0; k <= k1; ++k) s += taps[k + r] * row[k];
            tmp.at(x, y) = s;
        }
    }
    for (int y = 0; y < in.h; ++y) {
        const int k0 = std::max(-r, -y);
        const int k1 = std::min(r, in.h - 1 - y);
        double *dst = &out.v[static_cast<std::size_t>(y) * in.w];
        for (int k = k0; k <= k1; ++k) {
            const double t = taps[k + r];
            const double *src = &tmp.v[static_cast<std::size_t>(y + k) * in.w];
            for (int x = 0; x < in.w; ++x) dst[x] += t * src[x];
        }
    }
    return out;
}

Plane channel(const Image &img, int c) {
    Plane p(img.width(), img.height());
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) p.at(x, y) = img.at(x, y, c);
    return p;
}

Plane product(const Plane &a, const Plane &b) {
    Plane p(a.w, a.h);
    for (std::size_t i = 0; i < p.v.size(); ++i) p.v[i] = a.v[i] * b.v[i];
    return p;
}

constexpr double kC1 = (kSsimK1 * 1.0) * (kSsimK1 * 1.0);
constexpr double kC2 = (kSsimK2 * 1.0) * (kSsimK2 * 1.0);

// Sum of the SSIM map of one channel; optionally the gradient of that sum
// with respect to x, written into d_x.
double ssim_channel(const Plane &x, const Plane &y, Plane *d_x) {
    const Plane mx = blur(x);
    const Plane my = blur(y);
    const Plane sxx = blur(product(x, x));
    const Plane syy = blur(product(y, y));
    const Plane sxy = blur(product(x, y));

    Plane g_mu(x.w, x.h), g_sxx(x.w, x.h), g_sxy(x.w, x.h);
    double total = 0.0;
    for (std::size_t i = 0; i < x.v.size(); ++i) {
        const double ux = mx.v[i], uy = my.v[i];
        const double vx = sxx.v[i] - ux * ux;
        const double vy = syy.v[i] - uy * uy;
        const double cxy = sxy.v[i] - ux * uy;
        const double a1 = 2.0 * ux * uy + kC1;
        const double a2 = 2.0 * cxy + kC2;
        const double b1 = ux * ux + uy * uy + kC1;
        const double b2 = vx + vy + kC2;
        const double s = (a1 * a2) / (b1 * b2);
        total += s;
        if (d_x) {
            g_mu.v[i] = s * (2.0 * uy / a1 - 2.0 * ux / b1 - 2.0 * uy / a2 + 2.0 * ux / b2);
            g_sxx.v[i] = -s / b2;
            g_sxy.v[i] = 2.0 * s / a2;
        }
    }
    if (d_x) {
        const Plane bm = blur(g_mu);
        const Plane bxx = blur(g_sxx);
        const Plane bxy = blur(g_sxy);
        for (std::size_t i = 0; i < x.v.size(); ++i) {
            d_x->v[i] = bm.v[i] + 2.0 * x.v[i] * bxx.v[i] + y.v[i] * bxy.v[i];
        }
    }
    return total;
}

} // namespace

double mse(const Image &a, const Image &b) {
    require_same_shape(a, b, "mse");
    const auto &da = a.data();
    const auto &db = b.data();
    if (da.empty()) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < da.size(); ++i) {
        const double d = da[i] - db[i];
        s += d * d;
    }
    return s / static_cast<double>(da.size());
}

double psnr(const Image &a, const Image &b) {
    const double e = mse(a, b);
    if (e < 1e-10) return kPsnrCap;
    return 10.0 * std::log10(1.0 / e);
}

double ssim(const Image &a, const Image &b) {
    require_same_shape(a, b, "ssim");
    if (a.pixel_count() == 0) return 1.0;
    double total = 0.0;
    for (int c = 0; c < 3; ++c) total += ssim_channel(channel(a, c), channel(b, c), nullptr);
    return total / (3.0 * static_cast<double>(a.pixel_count()));
}

Metrics metrics(const Image &render, const Image &target) {
    require_same_shape(render, target, "metrics");
    return {psnr(render, target), ssim(render, target)};
}

double ssim_with_gradient(const Image &render, const Image &target, Image &d_render) {
    require_same_shape(render, target, "ssim");
    d_render = Image(render.width(), render.height());
    if (render.pixel_count() == 0) return 1.0;
    const double n = 3.0 * static_cast<double>(render.pixel_count());
    double total = 0.0;
    for (int c = 0; c < 3; ++c) {
        Plane d(render.width(), render.height());
        total += ssim_channel(channel(render, c), channel(target, c), &d);
        for (int y = 0; y < render.height(); ++y)
            for (int x = 0; x < render.width(); ++x) d_render.at(x, y, c) = d.at(x, y) / n;
    }
    return total / n;
}

LossValue loss(const Image &render, const Image &target, double lambda_ssim) {
    require_same_shape(render, target, "loss");
    LossValue out;
    out.d_render = Image(render.width(), render.height());
    const auto &r = render.data();
    const auto &t = target.data();
    if (r.empty()) return out;
    const double n = static_cast<double>(r.size());
    auto &d = out.d_render.data();
    double l1 = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
        const double diff = r[i] - t[i];
        l1 += std::abs(diff);
        const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
        d[i] = (1.0 - lambda_ssim) * sign / n;
    }
    out.l1 = l1 / n;
    out.value = (1.0 - lambda_ssim) * out.l1;
    if (lambda_ssim > 0.0) {
        Image d_ssim;
        out.ssim = ssim_with_gradient(render, target, d_ssim);
        out.value += lambda_ssim * (1.0 - out.ssim);
        const auto &ds = d_ssim.data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] -= lambda_ssim * ds[i];
    } else {
        out.ssim = ssim(render, target);
    }
    return out;
}

} // namespace discsplat
