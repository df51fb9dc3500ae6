// SPDX-License-Identifier: Apache-2.0
//
// Structural diagnostics: state-space embeddings, kernel factorization
// checks, spectral profiles and the Taylor-order convergence study.

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "dsf/core.hpp"
#include "dsf/reference.hpp"

namespace dsf {

// ---------------------------------------------------------------------------
// Embedding into a larger state dimension. The padded rows and columns are
//
//   Lambda_bar = [Lambda  0 ]    B_bar = [B      ]    C_bar = [C  0]
//                [0   Lhat ]            [B_extra]
//
// with D unchanged. Because C_bar is zero on the padded columns the extra
// states never reach the output, so engine results are preserved for every
// choice of Lhat and B_extra. Defaults fill both with zeros; seeded_fill
// draws them uniformly from (-1, 1) instead.
// ---------------------------------------------------------------------------

struct EmbedOptions {
  std::size_t padded_dim = 0;  // N_bar, must be >= sys.state_dim
  bool seeded_fill = false;
  std::uint64_t seed = 0;
};

DsfDense embed_system(const DsfDense& sys, const EmbedOptions& options);

// ---------------------------------------------------------------------------
// Kernel factorization diagnostics.
// ---------------------------------------------------------------------------

// For attention-built systems the transition products telescope, so every
// kernel block must equal phi(q_i)^T psi(k_j) / eta_i * W_V. Reports the
// worst absolute residual over all blocks j <= i. PreconditionError if the
// system was not produced by an attention adapter.
struct TelescopeReport {
  double max_residual = 0.0;
  std::size_t arg_i = 0, arg_j = 0;
  double tolerance = 0.0;
  bool pass = false;

  std::string to_json() const;
};

TelescopeReport telescoping_report(const DsfFactored& sys, double tol = 1e-10);

// Best per-step scalar fit of the kernel against the raw factor outer
// products: for each i, alpha_i minimizes the squared error of
// Phi[i][j] ~ alpha_i * M_ij over j <= i, where
//
//   attention:  M_ij = phi(q_i)^T psi(k_j) * W_V
//   s6:         M_ij = (c_i^T b_j) * diag(delta_j)
//
// Attention kernels fit exactly (alpha_i = 1/eta_i); S6 kernels with
// non-constant delta do not, which is what separates the two families.
struct ScalarFitReport {
  double max_residual = 0.0;
  std::size_t arg_i = 0, arg_j = 0;

  std::string to_json() const;
};

ScalarFitReport kernel_scalar_fit(const DsfFactored& sys);

// ---------------------------------------------------------------------------
// Spectral profile: per-step extrema of |lambda| plus the running product of
// the maxima, the worst-case state amplification up to each step.
// ---------------------------------------------------------------------------

struct SpectralProfile {
  std::vector<double> max_abs;       // L
  std::vector<double> min_abs;       // L
  std::vector<double> running_prod;  // L, prod of max_abs up to i

  std::string to_json() const;
  std::string to_csv() const;
};

SpectralProfile spectral_profile(const DsfDense& sys);
SpectralProfile spectral_profile(const DsfFactored& sys);

// ---------------------------------------------------------------------------
// Taylor convergence study: truncated-softmax attention versus the exact
// softmax oracle across feature orders. Queries are rescaled (through W_Q)
// so max |q_i^T k_j| over causal pairs is at most score_cap before either
// route runs.
// ---------------------------------------------------------------------------

struct ConvergenceRow {
  std::size_t order = 0;
  std::size_t feature_dim = 0;
  double max_abs_err = 0.0;
  double mean_abs_err = 0.0;
};

struct ConvergenceTable {
  double score_cap = 1.0;
  std::vector<ConvergenceRow> rows;

  std::string to_json() const;
  std::string to_csv() const;
};

ConvergenceTable taylor_convergence_study(const Sequence& u,
                                          const AttentionWeights& w,
                                          const std::vector<std::size_t>& orders,
                                          double score_cap = 1.0);

}  // namespace dsf
