// SPDX-License-Identifier: Apache-2.0
//
// Quadratic-time and stepwise reference models. These are the ground truth
// the recurrence adapters are verified against, so they are written directly
// from the model equations and share no code with the adapter or engine
// paths. All arithmetic is 64-bit.

#pragma once

#include <cstddef>
#include <vector>

#include "dsf/core.hpp"

namespace dsf {

// ---------------------------------------------------------------------------
// Causal attention. Projections q_i = W_Q u_i and k_i = W_K u_i live in R^m,
// values v_i = W_V u_i in R^d. No 1/sqrt(m) score scaling is applied
// anywhere; weights are expected to be drawn accordingly.
// ---------------------------------------------------------------------------

struct AttentionWeights {
  std::size_t channels = 0;  // d
  std::size_t proj = 0;      // m
  std::size_t heads = 1;     // s; must divide both m and d
  std::vector<double> w_q;   // m x d
  std::vector<double> w_k;   // m x d
  std::vector<double> w_v;   // d x d
  std::vector<double> w_eta; // 1 x d, or empty (normalized attention only)

  bool has_eta() const { return !w_eta.empty(); }
};

void validate(const AttentionWeights& w);

// y_i = sum_{j<=i} softmax_j(q_i^T k_0..i) v_j, computed with the usual
// max-subtracted stable softmax.
Sequence softmax_attention_ref(const Sequence& u, const AttentionWeights& w);

// Linear attention with feature map elu(x)+1 on queries and keys and the
// running-sum normalizer eta_i = f(q_i)^T sum_{j<=i} f(k_j).
Sequence linear_attention_ref(const Sequence& u, const AttentionWeights& w);

// Normalized attention: raw scores q_i^T k_j divided by a positive scalar
// eta(u_i) that depends on the current input only.
enum class EtaKind { Exp, Softplus, Sigmoid };
Sequence normalized_attention_ref(const Sequence& u, const AttentionWeights& w,
                                  EtaKind eta);

// Multi-head variants: head h reads rows [h*m/s, (h+1)*m/s) of W_Q and W_K
// and rows [h*d/s, (h+1)*d/s) of W_V; outputs are stacked row-wise with no
// output projection.
Sequence multihead_softmax_ref(const Sequence& u, const AttentionWeights& w);
Sequence multihead_linear_ref(const Sequence& u, const AttentionWeights& w);

// ---------------------------------------------------------------------------
// Selective state space layer (S6). Each channel c carries an n-dimensional
// state driven by input-dependent quantities
//
//   delta_i = softplus(W_delta (W_u u_i) + b_delta)   in R^d
//   b_i = W_B u_i, c_i = W_C u_i                      in R^n
//   h^c_i = exp(-delta^c_i a^c) (.) h^c_{i-1} + delta^c_i b_i u^c_i
//   y^c_i = c_i^T h^c_i  [+ w_skip^c u^c_i]
//
// where a^c is column c of the n x d decay grid.
// ---------------------------------------------------------------------------

struct S6Weights {
  std::size_t channels = 0;  // d
  std::size_t state = 0;     // n
  std::size_t rank = 0;      // p, must satisfy p < d
  std::vector<double> a;        // n x d, decay grid
  std::vector<double> w_b;      // n x d
  std::vector<double> w_c;      // n x d
  std::vector<double> w_delta;  // d x p
  std::vector<double> w_u;      // p x d
  std::vector<double> b_delta;  // d
  std::vector<double> w_skip;   // d, or empty

  bool has_skip() const { return !w_skip.empty(); }
};

void validate(const S6Weights& w);

Sequence s6_ref(const Sequence& u, const S6Weights& w);

// Per-step discretization steps delta_i, exposed for diagnostics. Row i
// holds delta_i in R^d.
std::vector<double> s6_delta(const Sequence& u, const S6Weights& w);

// ---------------------------------------------------------------------------
// Gated RNNs in their multiplicative (tanh-free) form.
// ---------------------------------------------------------------------------

// x_i = sig(W_f u_i) (.) x_{i-1} + sig(W_i u_i) (.) (W_u u_i)
// y_i = sig(W_o u_i) (.) x_i
struct QlstmWeights {
  std::size_t channels = 0;  // d
  std::vector<double> w_f, w_i, w_u, w_o;  // d x d each
};

void validate(const QlstmWeights& w);

Sequence qlstm_ref(const Sequence& u, const QlstmWeights& w);

// r_i = sig(W_r u_i)
// a_i = exp(-c r_i (.) softplus(lambda_param))
// x_i = a_i (.) x_{i-1} + sqrt(1 - a_i^2) (.) (sig(W_b u_i) (.) u_i)
// y_i = x_i
struct RgLruWeights {
  std::size_t channels = 0;  // d
  double c = 8.0;            // gate temperature, must be positive
  std::vector<double> w_r, w_b;       // d x d each
  std::vector<double> lambda_param;   // d
};

void validate(const RgLruWeights& w);

Sequence rglru_ref(const Sequence& u, const RgLruWeights& w);

// ---------------------------------------------------------------------------
// Shared scalar nonlinearities. Defined once so the reference models and the
// adapters agree on the numerics.
// ---------------------------------------------------------------------------

double stable_sigmoid(double x);
double stable_softplus(double x);
double elu_plus_one(double x);

}  // namespace dsf
