// SPDX-License-Identifier: Apache-2.0
//
// Every function here evaluates its model the obvious way, quadratically for
// the attention family, so the recurrence adapters have an independent
// ground truth to be checked against.

#include "dsf/reference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

namespace dsf {

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double elu_plus_one(double x) {
  return x > 0.0 ? x + 1.0 : std::exp(x);
}

namespace {

void require_matrix(const std::vector<double>& m, std::size_t rows,
                    std::size_t cols, const char* what) {
  if (m.size() != rows * cols) {
    std::ostringstream os;
    os << what << ": expected " << rows << "x" << cols << ", got " << m.size()
       << " entries";
    throw DimensionError(os.str());
  }
  for (double v : m) {
    if (!std::isfinite(v)) {
      throw NonFiniteError(std::string(what) + " contains a non-finite value");
    }
  }
}

// y = M x for row-major M (rows x cols).
void matvec(const std::vector<double>& m, std::size_t rows, std::size_t cols,
            const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    const double* row = m.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
}

double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
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

// Projects u through W_Q / W_K / W_V. Rows of the results are per-step.
struct Projections {
  std::vector<double> q, k, v;  // L x m, L x m, L x d
};

Projections project(const Sequence& u, const AttentionWeights& w) {
  const std::size_t L = u.length, d = w.channels, m = w.proj;
  Projections p;
  p.q.resize(L * m);
  p.k.resize(L * m);
  p.v.resize(L * d);
  for (std::size_t i = 0; i < L; ++i) {
    matvec(w.w_q, m, d, u.row(i), p.q.data() + i * m);
    matvec(w.w_k, m, d, u.row(i), p.k.data() + i * m);
    matvec(w.w_v, d, d, u.row(i), p.v.data() + i * d);
  }
  return p;
}

double eta_scalar(EtaKind kind, double x) {
  switch (kind) {
    case EtaKind::Exp: return std::exp(x);
    case EtaKind::Softplus: return stable_softplus(x);
    case EtaKind::Sigmoid: return stable_sigmoid(x);
  }
  return 1.0;
}

// One softmax-attention head over arbitrary slices. q/k rows are mq wide,
// value rows are dv wide and stride through the value array.
void softmax_head(std::size_t L, std::size_t mq, const double* q,
                  const double* k, std::size_t dv, const double* v,
                  std::size_t vstride, double* y, std::size_t ystride) {
  std::vector<double> weights;
  for (std::size_t i = 0; i < L; ++i) {
    weights.resize(i + 1);
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j <= i; ++j) {
      weights[j] = dot(q + i * mq, k + j * mq, mq);
      peak = std::max(peak, weights[j]);
    }
    double denom = 0.0;
    for (std::size_t j = 0; j <= i; ++j) {
      weights[j] = std::exp(weights[j] - peak);
      denom += weights[j];
    }
    double* yi = y + i * ystride;
    std::fill(yi, yi + dv, 0.0);
    for (std::size_t j = 0; j <= i; ++j) {
      const double wj = weights[j] / denom;
      const double* vj = v + j * vstride;
      for (std::size_t c = 0; c < dv; ++c) yi[c] += wj * vj[c];
    }
  }
}

// One linear-attention head: features elu(x)+1, running-sum normalizer.
void linear_head(std::size_t L, std::size_t mq, const double* q,
                 const double* k, std::size_t dv, const double* v,
                 std::size_t vstride, double* y, std::size_t ystride) {
  std::vector<double> fq(mq), fk(L * mq), ksum(mq, 0.0);
  for (std::size_t j = 0; j < L; ++j) {
    for (std::size_t r = 0; r < mq; ++r) {
      fk[j * mq + r] = elu_plus_one(k[j * mq + r]);
    }
  }
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t r = 0; r < mq; ++r) fq[r] = elu_plus_one(q[i * mq + r]);
    for (std::size_t r = 0; r < mq; ++r) ksum[r] += fk[i * mq + r];
    const double eta = dot(fq.data(), ksum.data(), mq);
    if (eta <= 0.0) {
      throw NormalizationError("running-sum normalizer is not positive");
    }
    double* yi = y + i * ystride;
    std::fill(yi, yi + dv, 0.0);
    for (std::size_t j = 0; j <= i; ++j) {
      const double wj = dot(fq.data(), fk.data() + j * mq, mq) / eta;
      const double* vj = v + j * vstride;
      for (std::size_t c = 0; c < dv; ++c) yi[c] += wj * vj[c];
    }
  }
}

}  // namespace

void validate(const AttentionWeights& w) {
  if (w.channels == 0 || w.proj == 0) {
    throw DimensionError("attention weights need d >= 1 and m >= 1");
  }
  if (w.heads == 0 || w.proj % w.heads != 0 || w.channels % w.heads != 0) {
    std::ostringstream os;
    os << "head count " << w.heads << " must divide both m = " << w.proj
       << " and d = " << w.channels;
    throw DimensionError(os.str());
  }
  require_matrix(w.w_q, w.proj, w.channels, "w_q");
  require_matrix(w.w_k, w.proj, w.channels, "w_k");
  require_matrix(w.w_v, w.channels, w.channels, "w_v");
  if (w.has_eta()) require_matrix(w.w_eta, 1, w.channels, "w_eta");
}

Sequence softmax_attention_ref(const Sequence& u, const AttentionWeights& w) {
  validate(w);
  check_input(u, w.channels);
  const Projections p = project(u, w);
  Sequence y(u.length, w.channels);
  softmax_head(u.length, w.proj, p.q.data(), p.k.data(), w.channels,
               p.v.data(), w.channels, y.data.data(), w.channels);
  return y;
}

Sequence linear_attention_ref(const Sequence& u, const AttentionWeights& w) {
  validate(w);
  check_input(u, w.channels);
  const Projections p = project(u, w);
  Sequence y(u.length, w.channels);
  linear_head(u.length, w.proj, p.q.data(), p.k.data(), w.channels,
              p.v.data(), w.channels, y.data.data(), w.channels);
  return y;
}

Sequence normalized_attention_ref(const Sequence& u, const AttentionWeights& w,
                                  EtaKind eta) {
  validate(w);
  check_input(u, w.channels);
  if (!w.has_eta()) {
    throw PreconditionError("normalized attention requires w_eta");
  }
  const std::size_t L = u.length, d = w.channels, m = w.proj;
  const Projections p = project(u, w);
  Sequence y(L, d);
  for (std::size_t i = 0; i < L; ++i) {
    const double denom = eta_scalar(eta, dot(w.w_eta.data(), u.row(i), d));
    if (denom == 0.0) {
      throw NormalizationError("eta(u_i) underflowed to zero");
    }
    double* yi = y.row(i);
    for (std::size_t j = 0; j <= i; ++j) {
      const double wj = dot(p.q.data() + i * m, p.k.data() + j * m, m) / denom;
      const double* vj = p.v.data() + j * d;
      for (std::size_t c = 0; c < d; ++c) yi[c] += wj * vj[c];
    }
  }
  return y;
}

namespace {

// Compacts head h's rows of a packed L x m projection into L x (m/s).
std::vector<double> head_slice(const std::vector<double>& full, std::size_t L,
                               std::size_t m, std::size_t mh, std::size_t h) {
  std::vector<double> out(L * mh);
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t r = 0; r < mh; ++r) out[i * mh + r] = full[i * m + h * mh + r];
  }
  return out;
}

}  // namespace

Sequence multihead_softmax_ref(const Sequence& u, const AttentionWeights& w) {
  validate(w);
  check_input(u, w.channels);
  const std::size_t mh = w.proj / w.heads, dh = w.channels / w.heads;
  const Projections p = project(u, w);
  Sequence y(u.length, w.channels);
  for (std::size_t h = 0; h < w.heads; ++h) {
    const std::vector<double> qh = head_slice(p.q, u.length, w.proj, mh, h);
    const std::vector<double> kh = head_slice(p.k, u.length, w.proj, mh, h);
    softmax_head(u.length, mh, qh.data(), kh.data(),
                 dh, p.v.data() + h * dh, w.channels,
                 y.data.data() + h * dh, w.channels);
  }
  return y;
}

Sequence multihead_linear_ref(const Sequence& u, const AttentionWeights& w) {
  validate(w);
  check_input(u, w.channels);
  const std::size_t mh = w.proj / w.heads, dh = w.channels / w.heads;
  const Projections p = project(u, w);
  Sequence y(u.length, w.channels);
  for (std::size_t h = 0; h < w.heads; ++h) {
    const std::vector<double> qh = head_slice(p.q, u.length, w.proj, mh, h);
    const std::vector<double> kh = head_slice(p.k, u.length, w.proj, mh, h);
    linear_head(u.length, mh, qh.data(), kh.data(),
                dh, p.v.data() + h * dh, w.channels,
                y.data.data() + h * dh, w.channels);
  }
  return y;
}

void validate(const S6Weights& w) {
  if (w.channels == 0 || w.state == 0) {
    throw DimensionError("s6 weights need d >= 1 and n >= 1");
  }
  if (w.rank == 0 || w.rank >= w.channels) {
    std::ostringstream os;
    os << "delta rank p = " << w.rank << " must satisfy 1 <= p < d = "
       << w.channels;
    throw DimensionError(os.str());
  }
  require_matrix(w.a, w.state, w.channels, "a");
  require_matrix(w.w_b, w.state, w.channels, "w_b");
  require_matrix(w.w_c, w.state, w.channels, "w_c");
  require_matrix(w.w_delta, w.channels, w.rank, "w_delta");
  require_matrix(w.w_u, w.rank, w.channels, "w_u");
  require_matrix(w.b_delta, 1, w.channels, "b_delta");
  if (w.has_skip()) require_matrix(w.w_skip, 1, w.channels, "w_skip");
}

std::vector<double> s6_delta(const Sequence& u, const S6Weights& w) {
  const std::size_t L = u.length, d = w.channels, p = w.rank;
  std::vector<double> delta(L * d);
  std::vector<double> low(p), pre(d);
  for (std::size_t i = 0; i < L; ++i) {
    matvec(w.w_u, p, d, u.row(i), low.data());
    matvec(w.w_delta, d, p, low.data(), pre.data());
    for (std::size_t c = 0; c < d; ++c) {
      delta[i * d + c] = stable_softplus(pre[c] + w.b_delta[c]);
    }
  }
  return delta;
}

Sequence s6_ref(const Sequence& u, const S6Weights& w) {
  validate(w);
  check_input(u, w.channels);
  const std::size_t L = u.length, d = w.channels, n = w.state;
  const std::vector<double> delta = s6_delta(u, w);

  Sequence y(L, d);
  std::vector<double> h(n * d, 0.0), b(n), c(n);
  for (std::size_t i = 0; i < L; ++i) {
    matvec(w.w_b, n, d, u.row(i), b.data());
    matvec(w.w_c, n, d, u.row(i), c.data());
    const double* ui = u.row(i);
    for (std::size_t ch = 0; ch < d; ++ch) {
      const double dch = delta[i * d + ch];
      double* hc = h.data() + ch * n;
      double acc = 0.0;
      for (std::size_t r = 0; r < n; ++r) {
        hc[r] = std::exp(-dch * w.a[r * d + ch]) * hc[r] + dch * b[r] * ui[ch];
        acc += c[r] * hc[r];
      }
      y.at(i, ch) = acc;
      if (w.has_skip()) y.at(i, ch) += w.w_skip[ch] * ui[ch];
    }
  }
  return y;
}

void validate(const QlstmWeights& w) {
  if (w.channels == 0) throw DimensionError("qlstm weights need d >= 1");
  require_matrix(w.w_f, w.channels, w.channels, "w_f");
  require_matrix(w.w_i, w.channels, w.channels, "w_i");
  require_matrix(w.w_u, w.channels, w.channels, "w_u");
  require_matrix(w.w_o, w.channels, w.channels, "w_o");
}

Sequence qlstm_ref(const Sequence& u, const QlstmWeights& w) {
  validate(w);
  check_input(u, w.channels);
  const std::size_t L = u.length, d = w.channels;
  Sequence y(L, d);
  std::vector<double> x(d, 0.0), f(d), g(d), cand(d), o(d);
  for (std::size_t i = 0; i < L; ++i) {
    matvec(w.w_f, d, d, u.row(i), f.data());
    matvec(w.w_i, d, d, u.row(i), g.data());
    matvec(w.w_u, d, d, u.row(i), cand.data());
    matvec(w.w_o, d, d, u.row(i), o.data());
    for (std::size_t c = 0; c < d; ++c) {
      x[c] = stable_sigmoid(f[c]) * x[c] + stable_sigmoid(g[c]) * cand[c];
      y.at(i, c) = stable_sigmoid(o[c]) * x[c];
    }
  }
  return y;
}

void validate(const RgLruWeights& w) {
  if (w.channels == 0) throw DimensionError("rg-lru weights need d >= 1");
  if (!(w.c > 0.0) || !std::isfinite(w.c)) {
    throw ConfigError("rg-lru temperature c must be a positive finite value");
  }
  require_matrix(w.w_r, w.channels, w.channels, "w_r");
  require_matrix(w.w_b, w.channels, w.channels, "w_b");
  require_matrix(w.lambda_param, 1, w.channels, "lambda_param");
}

Sequence rglru_ref(const Sequence& u, const RgLruWeights& w) {
  validate(w);
  check_input(u, w.channels);
  const std::size_t L = u.length, d = w.channels;
  Sequence y(L, d);
  std::vector<double> x(d, 0.0), r(d), g(d);
  for (std::size_t i = 0; i < L; ++i) {
    matvec(w.w_r, d, d, u.row(i), r.data());
    matvec(w.w_b, d, d, u.row(i), g.data());
    const double* ui = u.row(i);
    for (std::size_t c = 0; c < d; ++c) {
      const double a =
          std::exp(-w.c * stable_sigmoid(r[c]) * stable_softplus(w.lambda_param[c]));
      x[c] = a * x[c] + std::sqrt(1.0 - a * a) * (stable_sigmoid(g[c]) * ui[c]);
      y.at(i, c) = x[c];
    }
  }
  return y;
}

}  // namespace dsf
