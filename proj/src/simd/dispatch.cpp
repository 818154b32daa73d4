// Copyright Contributors to the DiscSplat Project
// SPDX-License-Identifier: Apache-2.0

#include "discsplat/simd/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace discsplat::simd {

std::string_view to_string(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

bool isa_supported(Isa isa) {
    switch (isa) {
    case Isa::scalar: return true;
    case Isa::avx2:
#if defined(__x86_64__) || defined(_M_X64)
        return __builtin_cpu_supports("avx2");
#else
        return false;
#endif
    }
    return false;
}

namespace {

Isa detect() {
    if (const char *env = std::getenv("DISCSPLAT_SIMD")) {
        const std::string want(env);
        if (want == "scalar") return Isa::scalar;
        if (want == "avx2" && isa_supported(Isa::avx2)) return Isa::avx2;
    }
    return isa_supported(Isa::avx2) ? Isa::avx2 : Isa::scalar;
}

std::atomic<Isa> &active() {
    static std::atomic<Isa> isa{detect()};
    return isa;
}

} // namespace

Isa active_isa() { return active().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
    if (!isa_supported(isa)) throw std::runtime_error("SIMD variant not supported on this CPU");
    active().store(isa, std::memory_order_relaxed);
}

RowKernelFn row_kernel(Isa isa) {
#if defined(__x86_64__) || defined(_M_X64)
    if (isa == Isa::avx2) return &row_kernel_avx2;
#endif
    (void)isa;
    return &row_kernel_scalar;
}

void exp_batch(Isa isa, const double *in, double *out, int count) {
#if defined(__x86_64__) || defined(_M_X64)
    if (isa == Isa::avx2) return exp_batch_avx2(in, out, count);
#endif
    exp_batch_scalar(in, out, count);
}

} // namespace discsplat::simd
