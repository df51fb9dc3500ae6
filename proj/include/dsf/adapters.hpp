// SPDX-License-Identifier: Apache-2.0
//
// Exact rewrites of sequence models into DSF form. Each adapter consumes an
// input sequence plus model weights and emits a DsfFactored system whose
// engine evaluation reproduces the corresponding reference model up to
// floating-point roundoff.
//
// Attention with separable scores phi(q_i)^T psi(k_j) / eta_i becomes, per
// channel, an n-dimensional recurrence with
//
//   Lambda_i = (eta_{i-1} / eta_i) I        (Lambda_0 = 1 by convention)
//   B_i      = (1/eta_i) (I_d tensor psi(k_i)) W_V
//   C_i      = I_d tensor phi(q_i)^T
//
// and the selective SSM / gated RNN adapters fill the same structure with
// their own per-step factors.

#pragma once

#include <cstddef>
#include <vector>

#include "dsf/core.hpp"
#include "dsf/reference.hpp"

namespace dsf {

inline constexpr std::size_t kDefaultFeatureCap = 1000000;

// ---------------------------------------------------------------------------
// Feature maps on R^m.
// ---------------------------------------------------------------------------

struct FeatureMap {
  enum class Kind { Identity, EluPlusOne, Taylor };

  Kind kind = Kind::Identity;
  std::size_t input_dim = 0;  // m
  std::size_t order = 0;      // Taylor truncation order p

  static FeatureMap identity(std::size_t m);
  static FeatureMap elu_plus_one(std::size_t m);
  // Scaled Kronecker powers [1, x, x tensor x / sqrt(2!), ...] up to order p,
  // so that phi(q)^T phi(k) = sum_{j<=p} (q^T k)^j / j!. The output dimension
  // is sum_{j<=p} m^j; exceeding `cap` throws CapExceededError.
  static FeatureMap taylor(std::size_t m, std::size_t order,
                           std::size_t cap = kDefaultFeatureCap);

  std::size_t output_dim() const;
  // Writes output_dim() values to out.
  void apply(const double* x, double* out) const;
};

// ---------------------------------------------------------------------------
// Normalizers eta_i.
// ---------------------------------------------------------------------------

struct Normalizer {
  enum class Kind {
    KernelSum,       // eta_i = phi(q_i)^T sum_{j<=i} psi(k_j)
    ExpLinear,       // eta_i = exp(w_eta u_i)
    SoftplusLinear,  // eta_i = softplus(w_eta u_i)
    SigmoidLinear,   // eta_i = sigmoid(w_eta u_i)
    Unit,            // eta_i = 1
  };

  Kind kind = Kind::Unit;

  static Normalizer kernel_sum() { return {Kind::KernelSum}; }
  static Normalizer exp_linear() { return {Kind::ExpLinear}; }
  static Normalizer softplus_linear() { return {Kind::SoftplusLinear}; }
  static Normalizer sigmoid_linear() { return {Kind::SigmoidLinear}; }
  static Normalizer unit() { return {Kind::Unit}; }
};

// General separable attention rewrite for single-head weights. KernelSum
// raises NormalizationError when the running normalizer is not positive
// (possible with truncated Taylor features); the *Linear kinds raise when
// eta underflows to zero and read w.w_eta, which must be present.
DsfFactored attention_to_dsf(const Sequence& u, const AttentionWeights& w,
                             const FeatureMap& phi, const FeatureMap& psi,
                             const Normalizer& eta);

// Convenience constructions.
DsfFactored linear_attention_to_dsf(const Sequence& u, const AttentionWeights& w);
DsfFactored normalized_attention_to_dsf(const Sequence& u,
                                        const AttentionWeights& w, EtaKind eta);
DsfFactored taylor_softmax_to_dsf(const Sequence& u, const AttentionWeights& w,
                                  std::size_t order,
                                  std::size_t cap = kDefaultFeatureCap);

// Multi-head attention: every head h applies the configured feature maps to
// its own m/s-dimensional slices of q and k and keeps its own normalizer, so
// Lambda_i is block diagonal with one ratio per head.
struct HeadSpec {
  FeatureMap::Kind map = FeatureMap::Kind::EluPlusOne;
  std::size_t taylor_order = 0;
  Normalizer::Kind norm = Normalizer::Kind::KernelSum;
  std::size_t feature_cap = kDefaultFeatureCap;
};

DsfFactored multihead_to_dsf(const Sequence& u, const AttentionWeights& w,
                             const HeadSpec& spec);
DsfFactored multihead_linear_to_dsf(const Sequence& u, const AttentionWeights& w);

// ---------------------------------------------------------------------------
// Selective SSM (S6).
// ---------------------------------------------------------------------------

// Lambda_i = exp(-(Delta_i tensor I_n) (.) A), B_i = Delta_i tensor b_i,
// C_i = I_d tensor c_i^T, with b_i = W_B u_i and c_i = W_C u_i.
DsfFactored s6_to_dsf(const Sequence& u, const S6Weights& w);

// For a scalar decay grid A = a * ones, the transition factors admit the
// closed form
//
//   exp(-a softplus(x)) = (1 + e^x)^(-a) = rev_sigmoid(x)^a
//
// evaluated here without softplus or exp of the preactivation
// x_i = W_delta W_u u_i + b_delta (the bias folds in as a constant-1 input
// channel). Returns the L x (n*d) transition diagonal; requires every entry
// of A to be identical, else PreconditionError.
std::vector<double> s6_lambda_rev_sigmoid(const Sequence& u, const S6Weights& w);

// s6_to_dsf with the transition diagonal replaced by the closed form above.
DsfFactored s6_to_dsf_rev_sigmoid(const Sequence& u, const S6Weights& w);

// ---------------------------------------------------------------------------
// Gated RNNs. Both are one-dimensional per channel (n = 1, N = d).
// ---------------------------------------------------------------------------

// Lambda_i = diag(sig(W_f u_i)), B_i = diag(sig(W_i u_i)) W_u,
// C_i = diag(sig(W_o u_i)).
DsfFactored qlstm_to_dsf(const Sequence& u, const QlstmWeights& w);

// Lambda_i = exp(-c sig(W_r u_i) (.) softplus(lambda_param)),
// B_i = sqrt(1 - Lambda_i^2) diag(sig(W_b u_i)), C_i = I.
DsfFactored rglru_to_dsf(const Sequence& u, const RgLruWeights& w);

}  // namespace dsf
