// SPDX-License-Identifier: Apache-2.0
//
// Three interchangeable evaluation strategies for a DSF system:
//
//   run_sequential   the recurrence, step by step
//   run_scan         associative prefix scan over (Lambda_i, B_i u_i) pairs
//   materialize_kernel + apply_kernel
//                    the unrolled convolution view
//
// The scan combines pairs with (a, b) o (a', b') = (a (.) a', a' (.) b + b'),
// elementwise on the diagonal. It reassociates the products, so its results
// match the sequential engine to a tolerance, not bitwise. All engines agree
// with each other to ~1e-12 on well-scaled systems.

#pragma once

#include <cstddef>
#include <optional>
#include <string>

#include "dsf/core.hpp"

namespace dsf {

inline constexpr std::size_t kDefaultKernelCap = 512;

Sequence run_sequential(const DsfDense& sys, const Sequence& u);

// Factored fast path: identical results to running the densified system, at
// O(L (N + d^2)) cost. Throws PreconditionError if the system was built from
// a different sequence than u.
Sequence run_sequential(const DsfFactored& sys, const Sequence& u);

struct ScanOptions {
  // Number of worker threads for the scan. The state entries are
  // independent scalar recurrences, so they are split across threads; the
  // combine tree is fixed and the result does not depend on the count.
  std::size_t threads = 1;
};

Sequence run_scan(const DsfDense& sys, const Sequence& u,
                  const ScanOptions& options = {});
Sequence run_scan(const DsfFactored& sys, const Sequence& u,
                  const ScanOptions& options = {});

// Materializes the lower-triangular block kernel. Costs O(L^2) blocks, so a
// cap guards against runaway sizes; exceeding it throws CapExceededError.
// The kernel view has no initial-state term, so a system with a nonzero
// h_init is rejected with PreconditionError.
KernelMatrix materialize_kernel(const DsfDense& sys,
                                std::size_t max_steps = kDefaultKernelCap);

// y_i = sum_{j<=i} block(i, j) u_j.
Sequence apply_kernel(const KernelMatrix& kernel, const Sequence& u);

struct EngineReport {
  std::string engine;
  double wall_seconds = 0.0;
  std::size_t threads = 1;
  std::optional<double> max_abs_deviation;  // vs a baseline, when one was run

  std::string to_json() const;
};

}  // namespace dsf
