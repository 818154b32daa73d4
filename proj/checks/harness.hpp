// Copyright Contributors to the DiscSplat Project
// SPDX-License-Identifier: Apache-2.0

// Property suites behind the grad-check, implicit-check and solver-check
// commands and the acceptance binary. Each returns a table of rows; a row
// passes when its measured value stays within its tolerance.

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace discsplat::checks {

struct CheckRow {
    std::string name;
    double value = 0.0;     // worst measured error
    double tolerance = 0.0; // pass iff value <= tolerance
    std::size_t samples = 0;
    std::string note;
    bool pass() const { return value <= tolerance; }
};

struct CheckTable {
    std::string title;
    std::vector<CheckRow> rows;
    bool pass() const;
    std::string format() const;
};

struct GradCheckOptions {
    std::uint64_t seed = 0;
    int scenes = 100;
    int max_splats = 8;
    int size = 32;
    double step = 1e-4;
    double tolerance = 1e-4;
};

/// Analytic gradients of the L1 loss against central differences on random
/// small scenes, per continuous parameter group. Perturbations that change
/// any taped contributor, any indicator bit or the sign of any residual are
/// not compared.
CheckTable grad_check(const GradCheckOptions &options = {});

struct ImplicitCheckOptions {
    std::uint64_t seed = 0;
    int curves = 1000;
    int samples = 200;
    double tolerance = 1e-6;
};

/// Largest |F(B(t))| of the normalized implicit form over parametric samples.
CheckTable implicit_check(const ImplicitCheckOptions &options = {});

struct SolverCheckOptions {
    std::uint64_t seed = 0;
    int sets = 100000;
    double tolerance = 1e-7;
};

/// Real cubic roots against bisection and companion-matrix oracles. The
/// value of each row is the number of missed or spurious roots.
CheckTable solver_check(const SolverCheckOptions &options = {});

struct CrossingCheckOptions {
    std::uint64_t seed = 0;
    int queries = 10000;
    double tolerance = 1e-5;
};

/// Distance from the pixel to the curve rebuilt with each returned phi.
CheckTable crossing_check(const CrossingCheckOptions &options = {});

} // namespace discsplat::checks
