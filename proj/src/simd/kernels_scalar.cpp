// Copyright Contributors to the DiscSplat Project
// SPDX-License-Identifier: Apache-2.0

#include "discsplat/simd/kernels.hpp"
#include "exp_constants.hpp"

#include <algorithm>
#include <bit>

namespace discsplat::simd {

double det_exp(double x) {
    using namespace exp_constants;
    x = std::min(std::max(x, kMinArg), kMaxArg);
    const double k = (x * kLog2e + kRoundMagic) - kRoundMagic;
    const double r = (x - k * kLn2Hi) - k * kLn2Lo;
    double p = kTaylor[0];
    for (int i = 1; i < kTaylorTerms; ++i) p = p * r + kTaylor[i];
    const auto bits = static_cast<std::uint64_t>(static_cast<std::int64_t>(k) + 1023) << 52;
    return p * std::bit_cast<double>(bits);
}

void exp_batch_scalar(const double *in, double *out, int count) {
    for (int i = 0; i < count; ++i) out[i] = det_exp(in[i]);
}

void row_kernel_scalar(const FootprintParams &fp, std::span<const RowPoly> curves, double x0, double y, int count,
                       double *gauss, std::uint32_t *gbits) {
    for (int i = 0; i < count; ++i) {
        const double x = x0 + static_cast<double>(i);
        gauss[i] = det_exp(footprint_power(fp, x, y));
        std::uint32_t bits = 0;
        for (std::size_t k = 0; k < curves.size(); ++k) {
            if (curves[k].eval(x) > 0.0) bits |= 1u << k;
        }
        gbits[i] = bits;
    }
}

} // namespace discsplat::simd
