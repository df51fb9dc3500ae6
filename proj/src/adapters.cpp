// SPDX-License-Identifier: Apache-2.0

#include "dsf/adapters.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

namespace dsf {

namespace {

void matvec(const std::vector<double>& m, std::size_t rows, std::size_t cols,
            const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    const double* row = m.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
}

void check_input(const Sequence& u, std::size_t channels) {
  validate(u);
  if (u.channels != channels) {
    std::ostringstream os;
    os << "weights expect " << channels << " channels, sequence has "
       << u.channels;
    throw DimensionError(os.str());
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Feature maps.
// ---------------------------------------------------------------------------

FeatureMap FeatureMap::identity(std::size_t m) {
  if (m == 0) throw DimensionError("feature map needs m >= 1");
  return {Kind::Identity, m, 0};
}

FeatureMap FeatureMap::elu_plus_one(std::size_t m) {
  if (m == 0) throw DimensionError("feature map needs m >= 1");
  return {Kind::EluPlusOne, m, 0};
}

FeatureMap FeatureMap::taylor(std::size_t m, std::size_t order,
                              std::size_t cap) {
  if (m == 0) throw DimensionError("feature map needs m >= 1");
  std::size_t dim = 1, term = 1;
  for (std::size_t j = 1; j <= order; ++j) {
    term *= m;
    dim += term;
    if (dim > cap) {
      std::ostringstream os;
      os << "taylor features of order " << order << " on R^" << m
         << " need at least " << dim << " dimensions, cap is " << cap;
      throw CapExceededError(os.str());
    }
  }
  return {Kind::Taylor, m, order};
}

std::size_t FeatureMap::output_dim() const {
  if (kind != Kind::Taylor) return input_dim;
  std::size_t dim = 1, term = 1;
  for (std::size_t j = 1; j <= order; ++j) {
    term *= input_dim;
    dim += term;
  }
  return dim;
}

void FeatureMap::apply(const double* x, double* out) const {
  const std::size_t m = input_dim;
  switch (kind) {
    case Kind::Identity:
      std::copy(x, x + m, out);
      return;
    case Kind::EluPlusOne:
      for (std::size_t r = 0; r < m; ++r) out[r] = dsf::elu_plus_one(x[r]);
      return;
    case Kind::Taylor:
      break;
  }
  // Scaled Kronecker powers. Block j holds x^(tensor j) / sqrt(j!), laid out
  // so that block entry [a_1 ... a_j] = x[a_1] * ... * x[a_j].
  out[0] = 1.0;
  std::size_t offset = 1, prev_len = 1;
  std::vector<double> prev(1, 1.0), cur;
  double scale = 1.0;
  for (std::size_t j = 1; j <= order; ++j) {
    const std::size_t len = prev_len * m;
    cur.resize(len);
    for (std::size_t a = 0; a < m; ++a) {
      for (std::size_t t = 0; t < prev_len; ++t) {
        cur[a * prev_len + t] = x[a] * prev[t];
      }
    }
    scale /= std::sqrt(static_cast<double>(j));
    for (std::size_t t = 0; t < len; ++t) out[offset + t] = scale * cur[t];
    offset += len;
    prev.swap(cur);
    prev_len = len;
  }
}

// ---------------------------------------------------------------------------
// Shared attention construction. Heads slice the projections; head h scans
// its own normalizer. Everything lands in one DsfFactored with groups ==
// heads.
// ---------------------------------------------------------------------------

namespace {

DsfFactored build_attention(const Sequence& u, const AttentionWeights& w,
                            const FeatureMap& phi_map, const FeatureMap& psi_map,
                            const Normalizer& norm, std::size_t heads) {
  validate(w);
  check_input(u, w.channels);
  const std::size_t L = u.length, d = w.channels, m = w.proj;
  const std::size_t mh = m / heads;
  if (phi_map.input_dim != mh || psi_map.input_dim != mh) {
    throw PreconditionError("feature maps must act on the per-head slice R^(m/s)");
  }
  if (phi_map.output_dim() != psi_map.output_dim()) {
    throw PreconditionError("phi and psi must share an output dimension");
  }
  const bool needs_eta_weights = norm.kind == Normalizer::Kind::ExpLinear ||
                                 norm.kind == Normalizer::Kind::SoftplusLinear ||
                                 norm.kind == Normalizer::Kind::SigmoidLinear;
  if (needs_eta_weights && !w.has_eta()) {
    throw PreconditionError("this normalizer requires w_eta in the weights");
  }

  const std::size_t n = phi_map.output_dim();
  DsfFactored sys;
  sys.steps = L;
  sys.expansion = n;
  sys.channels = d;
  sys.groups = heads;
  sys.heads = heads;
  sys.family = "attention";
  sys.lambda.assign(L * n * d, 0.0);
  sys.in_scale.assign(L * d, 0.0);
  sys.psi.assign(L * heads * n, 0.0);
  sys.phi.assign(L * heads * n, 0.0);
  sys.eta.assign(L * heads, 0.0);
  sys.value_map = w.w_v;
  sys.input_digest = sequence_digest(u);

  std::vector<double> q(m), k(m);
  std::vector<double> ksum(heads * n, 0.0);  // running sums for KernelSum
  const std::size_t dh = d / heads;

  for (std::size_t i = 0; i < L; ++i) {
    matvec(w.w_q, m, d, u.row(i), q.data());
    matvec(w.w_k, m, d, u.row(i), k.data());

    double eta_linear = 1.0;
    if (needs_eta_weights) {
      double x = 0.0;
      for (std::size_t c = 0; c < d; ++c) x += w.w_eta[c] * u.at(i, c);
      switch (norm.kind) {
        case Normalizer::Kind::ExpLinear: eta_linear = std::exp(x); break;
        case Normalizer::Kind::SoftplusLinear: eta_linear = stable_softplus(x); break;
        case Normalizer::Kind::SigmoidLinear: eta_linear = stable_sigmoid(x); break;
        default: break;
      }
      if (eta_linear == 0.0) {
        throw NormalizationError("eta(u_i) underflowed to zero");
      }
    }

    for (std::size_t h = 0; h < heads; ++h) {
      double* phi_row = sys.phi.data() + (i * heads + h) * n;
      double* psi_row = sys.psi.data() + (i * heads + h) * n;
      phi_map.apply(q.data() + h * mh, phi_row);
      psi_map.apply(k.data() + h * mh, psi_row);

      double eta = 1.0;
      switch (norm.kind) {
        case Normalizer::Kind::KernelSum: {
          double* sum = ksum.data() + h * n;
          for (std::size_t r = 0; r < n; ++r) sum[r] += psi_row[r];
          eta = 0.0;
          for (std::size_t r = 0; r < n; ++r) eta += phi_row[r] * sum[r];
          if (eta <= 0.0) {
            throw NormalizationError(
                "running-sum normalizer is not positive (truncated features "
                "can make it so)");
          }
          break;
        }
        case Normalizer::Kind::ExpLinear:
        case Normalizer::Kind::SoftplusLinear:
        case Normalizer::Kind::SigmoidLinear:
          eta = eta_linear;
          break;
        case Normalizer::Kind::Unit:
          eta = 1.0;
          break;
      }
      sys.eta[i * heads + h] = eta;

      const double ratio =
          i == 0 ? 1.0 : sys.eta[(i - 1) * heads + h] / eta;
      const double scale = 1.0 / eta;
      for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) {
        sys.in_scale[i * d + c] = scale;
        double* lam = sys.lambda.data() + i * n * d + c * n;
        for (std::size_t r = 0; r < n; ++r) lam[r] = ratio;
      }
    }
  }
  validate(sys);
  return sys;
}

}  // namespace

DsfFactored attention_to_dsf(const Sequence& u, const AttentionWeights& w,
                             const FeatureMap& phi, const FeatureMap& psi,
                             const Normalizer& eta) {
  if (w.heads != 1) {
    throw PreconditionError(
        "attention_to_dsf is the single-head entry point; use "
        "multihead_to_dsf for s > 1");
  }
  return build_attention(u, w, phi, psi, eta, 1);
}

DsfFactored linear_attention_to_dsf(const Sequence& u,
                                    const AttentionWeights& w) {
  return attention_to_dsf(u, w, FeatureMap::elu_plus_one(w.proj),
                          FeatureMap::elu_plus_one(w.proj),
                          Normalizer::kernel_sum());
}

DsfFactored normalized_attention_to_dsf(const Sequence& u,
                                        const AttentionWeights& w,
                                        EtaKind eta) {
  Normalizer norm;
  switch (eta) {
    case EtaKind::Exp: norm = Normalizer::exp_linear(); break;
    case EtaKind::Softplus: norm = Normalizer::softplus_linear(); break;
    case EtaKind::Sigmoid: norm = Normalizer::sigmoid_linear(); break;
  }
  return attention_to_dsf(u, w, FeatureMap::identity(w.proj),
                          FeatureMap::identity(w.proj), norm);
}

DsfFactored taylor_softmax_to_dsf(const Sequence& u, const AttentionWeights& w,
                                  std::size_t order, std::size_t cap) {
  return attention_to_dsf(u, w, FeatureMap::taylor(w.proj, order, cap),
                          FeatureMap::taylor(w.proj, order, cap),
                          Normalizer::kernel_sum());
}

DsfFactored multihead_to_dsf(const Sequence& u, const AttentionWeights& w,
                             const HeadSpec& spec) {
  validate(w);
  const std::size_t mh = w.proj / w.heads;
  FeatureMap map = FeatureMap::identity(mh);
  switch (spec.map) {
    case FeatureMap::Kind::Identity: break;
    case FeatureMap::Kind::EluPlusOne: map = FeatureMap::elu_plus_one(mh); break;
    case FeatureMap::Kind::Taylor:
      map = FeatureMap::taylor(mh, spec.taylor_order, spec.feature_cap);
      break;
  }
  return build_attention(u, w, map, map, Normalizer{spec.norm}, w.heads);
}

DsfFactored multihead_linear_to_dsf(const Sequence& u,
                                    const AttentionWeights& w) {
  return multihead_to_dsf(
      u, w,
      HeadSpec{FeatureMap::Kind::EluPlusOne, 0, Normalizer::Kind::KernelSum,
               kDefaultFeatureCap});
}

// ---------------------------------------------------------------------------
// Selective SSM. The delta path is recomputed here rather than borrowed from
// the reference implementation so the two routes stay independent.
// ---------------------------------------------------------------------------

namespace {

std::vector<double> adapter_s6_delta(const Sequence& u, const S6Weights& w) {
  const std::size_t L = u.length, d = w.channels, p = w.rank;
  std::vector<double> delta(L * d), low(p), pre(d);
  for (std::size_t i = 0; i < L; ++i) {
    matvec(w.w_u, p, d, u.row(i), low.data());
    matvec(w.w_delta, d, p, low.data(), pre.data());
    for (std::size_t c = 0; c < d; ++c) {
      delta[i * d + c] = stable_softplus(pre[c] + w.b_delta[c]);
    }
  }
  return delta;
}

}  // namespace

DsfFactored s6_to_dsf(const Sequence& u, const S6Weights& w) {
  validate(w);
  check_input(u, w.channels);
  const std::size_t L = u.length, d = w.channels, n = w.state;
  const std::vector<double> delta = adapter_s6_delta(u, w);

  DsfFactored sys;
  sys.steps = L;
  sys.expansion = n;
  sys.channels = d;
  sys.groups = 1;
  sys.heads = 1;
  sys.family = "s6";
  sys.lambda.assign(L * n * d, 0.0);
  sys.in_scale.assign(L * d, 0.0);
  sys.psi.assign(L * n, 0.0);
  sys.phi.assign(L * n, 0.0);
  sys.input_digest = sequence_digest(u);
  if (w.has_skip()) {
    sys.skip.assign(L * d, 0.0);
    for (std::size_t i = 0; i < L; ++i) {
      for (std::size_t c = 0; c < d; ++c) sys.skip[i * d + c] = w.w_skip[c];
    }
  }

  for (std::size_t i = 0; i < L; ++i) {
    matvec(w.w_b, n, d, u.row(i), sys.psi.data() + i * n);
    matvec(w.w_c, n, d, u.row(i), sys.phi.data() + i * n);
    for (std::size_t c = 0; c < d; ++c) {
      const double dch = delta[i * d + c];
      sys.in_scale[i * d + c] = dch;
      double* lam = sys.lambda.data() + i * n * d + c * n;
      for (std::size_t r = 0; r < n; ++r) {
        lam[r] = std::exp(-dch * w.a[r * d + c]);
      }
    }
  }
  validate(sys);
  return sys;
}

std::vector<double> s6_lambda_rev_sigmoid(const Sequence& u,
                                          const S6Weights& w) {
  validate(w);
  check_input(u, w.channels);
  const std::size_t L = u.length, d = w.channels, n = w.state, p = w.rank;
  const double a = w.a.empty() ? 0.0 : w.a[0];
  for (double v : w.a) {
    if (v != a) {
      throw PreconditionError(
          "the closed-form transition requires a scalar decay grid A = a*ones");
    }
  }

  // Fold the bias as a constant-1 channel: x_i = [W_delta W_u | b_delta]
  // applied to [u_i; 1].
  std::vector<double> wbar(d * (d + 1), 0.0);
  for (std::size_t r = 0; r < d; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      double acc = 0.0;
      for (std::size_t t = 0; t < p; ++t) {
        acc += w.w_delta[r * p + t] * w.w_u[t * d + c];
      }
      wbar[r * (d + 1) + c] = acc;
    }
    wbar[r * (d + 1) + d] = w.b_delta[r];
  }

  std::vector<double> lambda(L * n * d);
  std::vector<double> ubar(d + 1), x(d);
  for (std::size_t i = 0; i < L; ++i) {
    std::copy(u.row(i), u.row(i) + d, ubar.begin());
    ubar[d] = 1.0;
    matvec(wbar, d, d + 1, ubar.data(), x.data());
    for (std::size_t c = 0; c < d; ++c) {
      // exp(-a softplus(x)) = (1 + e^x)^(-a), branch only to dodge exp
      // overflow far outside the useful range.
      const double value =
          x[c] < 700.0 ? std::pow(1.0 + std::exp(x[c]), -a) : std::exp(-a * x[c]);
      double* lam = lambda.data() + i * n * d + c * n;
      for (std::size_t r = 0; r < n; ++r) lam[r] = value;
    }
  }
  return lambda;
}

DsfFactored s6_to_dsf_rev_sigmoid(const Sequence& u, const S6Weights& w) {
  DsfFactored sys = s6_to_dsf(u, w);
  sys.lambda = s6_lambda_rev_sigmoid(u, w);
  return sys;
}

// ---------------------------------------------------------------------------
// Gated RNNs: one factor group per channel, n = 1.
// ---------------------------------------------------------------------------

DsfFactored qlstm_to_dsf(const Sequence& u, const QlstmWeights& w) {
  validate(w);
  check_input(u, w.channels);
  const std::size_t L = u.length, d = w.channels;

  DsfFactored sys;
  sys.steps = L;
  sys.expansion = 1;
  sys.channels = d;
  sys.groups = d;
  sys.heads = 1;
  sys.family = "qlstm";
  sys.lambda.assign(L * d, 0.0);
  sys.in_scale.assign(L * d, 0.0);
  sys.psi.assign(L * d, 1.0);
  sys.phi.assign(L * d, 0.0);
  sys.value_map = w.w_u;
  sys.input_digest = sequence_digest(u);

  std::vector<double> f(d), g(d), o(d);
  for (std::size_t i = 0; i < L; ++i) {
    matvec(w.w_f, d, d, u.row(i), f.data());
    matvec(w.w_i, d, d, u.row(i), g.data());
    matvec(w.w_o, d, d, u.row(i), o.data());
    for (std::size_t c = 0; c < d; ++c) {
      sys.lambda[i * d + c] = stable_sigmoid(f[c]);
      sys.in_scale[i * d + c] = stable_sigmoid(g[c]);
      sys.phi[i * d + c] = stable_sigmoid(o[c]);
    }
  }
  validate(sys);
  return sys;
}

DsfFactored rglru_to_dsf(const Sequence& u, const RgLruWeights& w) {
  validate(w);
  check_input(u, w.channels);
  const std::size_t L = u.length, d = w.channels;

  DsfFactored sys;
  sys.steps = L;
  sys.expansion = 1;
  sys.channels = d;
  sys.groups = d;
  sys.heads = 1;
  sys.family = "rglru";
  sys.lambda.assign(L * d, 0.0);
  sys.in_scale.assign(L * d, 0.0);
  sys.psi.assign(L * d, 1.0);
  sys.phi.assign(L * d, 1.0);
  sys.input_digest = sequence_digest(u);

  std::vector<double> r(d), g(d);
  for (std::size_t i = 0; i < L; ++i) {
    matvec(w.w_r, d, d, u.row(i), r.data());
    matvec(w.w_b, d, d, u.row(i), g.data());
    for (std::size_t c = 0; c < d; ++c) {
      const double lam =
          std::exp(-w.c * stable_sigmoid(r[c]) * stable_softplus(w.lambda_param[c]));
      sys.lambda[i * d + c] = lam;
      sys.in_scale[i * d + c] =
          std::sqrt(1.0 - lam * lam) * stable_sigmoid(g[c]);
    }
  }
  validate(sys);
  return sys;
}

}  // namespace dsf
