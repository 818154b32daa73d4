// Copyright Contributors to the DiscSplat Project
// SPDX-License-Identifier: Apache-2.0

#include "discsplat/simd/kernels.hpp"

#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <random>
#include <vector>

namespace discsplat {
namespace {

using simd::Isa;

TEST(DetExp, CloseToStdExp) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-700.0, 700.0), small(-20.0, 0.0);
    double worst = 0.0;
    for (int i = 0; i < 200000; ++i) {
        const double x = i % 2 ? u(rng) : small(rng);
        const double ref = std::exp(x);
        worst = std::max(worst, std::abs(simd::det_exp(x) - ref) / ref);
    }
    EXPECT_LT(worst, 4e-16);
    EXPECT_EQ(simd::det_exp(0.0), 1.0);
}

TEST(DetExp, ClampsOutOfRange) {
    EXPECT_EQ(simd::det_exp(-1000.0), simd::det_exp(-708.0));
    EXPECT_EQ(simd::det_exp(1000.0), simd::det_exp(708.0));
    EXPECT_TRUE(std::isfinite(simd::det_exp(1000.0)));
}

class SimdEquivalence : public ::testing::Test {
protected:
    void SetUp() override {
        if (!simd::isa_supported(Isa::avx2)) GTEST_SKIP() << "CPU lacks AVX2";
    }
};

TEST_F(SimdEquivalence, ExpBatchBitIdentical) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-750.0, 750.0);
    for (int count : {0, 1, 3, 4, 5, 17, 1000}) {
        std::vector<double> in(count), a(count), b(count);
        for (auto &v : in) v = u(rng);
        simd::exp_batch(Isa::scalar, in.data(), a.data(), count);
        simd::exp_batch(Isa::avx2, in.data(), b.data(), count);
        for (int i = 0; i < count; ++i) {
            EXPECT_EQ(std::bit_cast<std::uint64_t>(a[i]), std::bit_cast<std::uint64_t>(b[i])) << in[i];
            EXPECT_EQ(a[i], simd::det_exp(in[i]));
        }
    }
}

TEST_F(SimdEquivalence, RowKernelBitIdentical) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0), pos(0.0, 64.0), inv(0.01, 2.0);
    const auto scalar = simd::row_kernel(Isa::scalar);
    const auto avx2 = simd::row_kernel(Isa::avx2);
    for (int trial = 0; trial < 2000; ++trial) {
        simd::FootprintParams fp{pos(rng), pos(rng), inv(rng), 0.0, inv(rng)};
        fp.inv_xy = 0.9 * std::sqrt(fp.inv_xx * fp.inv_yy) * u(rng);
        const int n_curves = trial % 5;
        std::vector<RowPoly> curves(n_curves);
        for (auto &c : curves) c = {pos(rng), 0.05 * std::abs(u(rng)) + 0.01, u(rng), u(rng), u(rng), u(rng)};
        const int count = 1 + trial % 23;
        const double x0 = std::floor(pos(rng)) + 0.5, y = std::floor(pos(rng)) + 0.5;
        std::vector<double> ga(count), gb(count);
        std::vector<std::uint32_t> ba(count), bb(count);
        scalar(fp, curves, x0, y, count, ga.data(), ba.data());
        avx2(fp, curves, x0, y, count, gb.data(), bb.data());
        for (int i = 0; i < count; ++i) {
            ASSERT_EQ(std::bit_cast<std::uint64_t>(ga[i]), std::bit_cast<std::uint64_t>(gb[i]));
            ASSERT_EQ(ba[i], bb[i]);
            // The scalar reference agrees with the shared helpers.
            const double x = x0 + i;
            ASSERT_EQ(ga[i], simd::det_exp(simd::footprint_power(fp, x, y)));
            std::uint32_t bits = 0;
            for (int k = 0; k < n_curves; ++k) bits |= (curves[k].eval(x) > 0.0 ? 1u : 0u) << k;
            ASSERT_EQ(ba[i], bits);
        }
    }
}

TEST(Dispatch, ForcingScalarAlwaysWorks) {
    const Isa before = simd::active_isa();
    simd::set_active_isa(Isa::scalar);
    EXPECT_EQ(simd::active_isa(), Isa::scalar);
    EXPECT_EQ(simd::row_kernel(), simd::row_kernel(Isa::scalar));
    simd::set_active_isa(before);
    EXPECT_EQ(simd::to_string(Isa::avx2), "avx2");
}

} // namespace
} // namespace discsplat
