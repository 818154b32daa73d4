// Copyright Contributors to the DiscSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace discsplat {

/// Worker count for tile-parallel loops: set_thread_count() if called, else
/// DISCSPLAT_THREADS, else hardware concurrency. set_thread_count(0) restores the default.
int thread_count();
void set_thread_count(int n);

/// Runs body(i) for i in [0, n). Items are independent; results must not
/// depend on which worker runs which item.
void parallel_for(std::size_t n, const std::function<void(std::size_t)> &body);

} // namespace discsplat
