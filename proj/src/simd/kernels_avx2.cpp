// Copyright Contributors to the DiscSplat Project
// SPDX-License-Identifier: Apache-2.0

// Compiled with -mavx2 (and never -mfma). Operation order mirrors
// kernels_scalar.cpp exactly; see tests/simd_test.cpp.

#include "discsplat/simd/kernels.hpp"
#include "exp_constants.hpp"

#include <immintrin.h>

namespace discsplat::simd {

namespace {

inline __m256d exp4(__m256d x) {
    using namespace exp_constants;
    x = _mm256_min_pd(_mm256_max_pd(x, _mm256_set1_pd(kMinArg)), _mm256_set1_pd(kMaxArg));
    const __m256d magic = _mm256_set1_pd(kRoundMagic);
    const __m256d k = _mm256_sub_pd(_mm256_add_pd(_mm256_mul_pd(x, _mm256_set1_pd(kLog2e)), magic), magic);
    const __m256d r = _mm256_sub_pd(_mm256_sub_pd(x, _mm256_mul_pd(k, _mm256_set1_pd(kLn2Hi))),
                                    _mm256_mul_pd(k, _mm256_set1_pd(kLn2Lo)));
    __m256d p = _mm256_set1_pd(kTaylor[0]);
    for (int i = 1; i < kTaylorTerms; ++i) p = _mm256_add_pd(_mm256_mul_pd(p, r), _mm256_set1_pd(kTaylor[i]));
    const __m128i k32 = _mm256_cvtpd_epi32(k);
    __m256i k64 = _mm256_cvtepi32_epi64(k32);
    k64 = _mm256_add_epi64(k64, _mm256_set1_epi64x(1023));
    const __m256d scale = _mm256_castsi256_pd(_mm256_slli_epi64(k64, 52));
    return _mm256_mul_pd(p, scale);
}

} // namespace

void exp_batch_avx2(const double *in, double *out, int count) {
    int i = 0;
    for (; i + 4 <= count; i += 4) _mm256_storeu_pd(out + i, exp4(_mm256_loadu_pd(in + i)));
    for (; i < count; ++i) out[i] = det_exp(in[i]);
}

void row_kernel_avx2(const FootprintParams &fp, std::span<const RowPoly> curves, double x0, double y, int count,
                     double *gauss, std::uint32_t *gbits) {
    const __m256d mean_x = _mm256_set1_pd(fp.mean_x);
    const __m256d inv_xx = _mm256_set1_pd(fp.inv_xx);
    const __m256d inv_xy = _mm256_set1_pd(fp.inv_xy);
    const __m256d half = _mm256_set1_pd(-0.5);
    const __m256d zero = _mm256_setzero_pd();
    const double dy_s = y - fp.mean_y;
    const __m256d dy = _mm256_set1_pd(dy_s);
    const __m256d b = _mm256_set1_pd((fp.inv_yy * dy_s) * dy_s);
    const __m256d lane = _mm256_set_pd(3.0, 2.0, 1.0, 0.0);

    int i = 0;
    for (; i + 4 <= count; i += 4) {
        const __m256d x = _mm256_add_pd(_mm256_set1_pd(x0), _mm256_add_pd(_mm256_set1_pd(static_cast<double>(i)), lane));
        const __m256d dx = _mm256_sub_pd(x, mean_x);
        const __m256d a = _mm256_mul_pd(_mm256_mul_pd(inv_xx, dx), dx);
        const __m256d c = _mm256_mul_pd(_mm256_mul_pd(inv_xy, dx), dy);
        const __m256d power = _mm256_sub_pd(_mm256_mul_pd(half, _mm256_add_pd(a, b)), c);
        _mm256_storeu_pd(gauss + i, exp4(power));

        __m128i bits = _mm_setzero_si128();
        for (std::size_t k = 0; k < curves.size(); ++k) {
            const RowPoly &rp = curves[k];
            const __m256d u = _mm256_mul_pd(_mm256_sub_pd(x, _mm256_set1_pd(rp.origin_x)), _mm256_set1_pd(rp.inv_scale));
            __m256d f = _mm256_add_pd(_mm256_mul_pd(_mm256_set1_pd(rp.c3), u), _mm256_set1_pd(rp.c2));
            f = _mm256_add_pd(_mm256_mul_pd(f, u), _mm256_set1_pd(rp.c1));
            f = _mm256_add_pd(_mm256_mul_pd(f, u), _mm256_set1_pd(rp.c0));
            const __m256d gt = _mm256_cmp_pd(f, zero, _CMP_GT_OQ);
            // 64-bit all-ones lanes -> 32-bit lanes, masked to bit k
            const __m128i lanes = _mm256_cvtpd_epi32(_mm256_and_pd(gt, _mm256_set1_pd(1.0)));
            bits = _mm_or_si128(bits, _mm_slli_epi32(lanes, static_cast<int>(k)));
        }
        _mm_storeu_si128(reinterpret_cast<__m128i *>(gbits + i), bits);
    }
    if (i < count) row_kernel_scalar(fp, curves, x0 + static_cast<double>(i), y, count - i, gauss + i, gbits + i);
}

} // namespace discsplat::simd
