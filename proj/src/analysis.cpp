// SPDX-License-Identifier: Apache-2.0

#include "dsf/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "dsf/adapters.hpp"
#include "dsf/engines.hpp"
#include "dsf/harness.hpp"

namespace dsf {

namespace {

double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

std::ostringstream json_stream() {
  std::ostringstream os;
  os.precision(17);
  return os;
}

}  // namespace

DsfDense embed_system(const DsfDense& sys, const EmbedOptions& options) {
  validate(sys);
  const std::size_t L = sys.steps, N = sys.state_dim, d = sys.channels;
  const std::size_t nb = options.padded_dim;
  if (nb < N) {
    std::ostringstream os;
    os << "padded state dimension " << nb << " is smaller than N = " << N;
    throw DimensionError(os.str());
  }

  DsfDense out;
  out.steps = L;
  out.state_dim = nb;
  out.channels = d;
  out.lambda.assign(L * nb, 0.0);
  out.input.assign(L * nb * d, 0.0);
  out.output.assign(L * d * nb, 0.0);
  out.skip = sys.skip;
  if (sys.has_h_init()) {
    out.h_init.assign(nb, 0.0);
    std::copy(sys.h_init.begin(), sys.h_init.end(), out.h_init.begin());
  }

  SplitMix64 rng(options.seed);
  for (std::size_t i = 0; i < L; ++i) {
    const double* lam = sys.lambda_at(i);
    double* lam_out = out.lambda.data() + i * nb;
    std::copy(lam, lam + N, lam_out);
    for (std::size_t k = N; k < nb; ++k) {
      lam_out[k] = options.seeded_fill ? rng.uniform(-1.0, 1.0) : 0.0;
    }

    const double* b = sys.input_at(i);
    double* b_out = out.input.data() + i * nb * d;
    std::copy(b, b + N * d, b_out);
    for (std::size_t k = N; k < nb; ++k) {
      for (std::size_t c = 0; c < d; ++c) {
        b_out[k * d + c] = options.seeded_fill ? rng.uniform(-1.0, 1.0) : 0.0;
      }
    }

    // C gains zero columns for the padded states, so they never surface.
    const double* cmat = sys.output_at(i);
    double* c_out = out.output.data() + i * d * nb;
    for (std::size_t r = 0; r < d; ++r) {
      std::copy(cmat + r * N, cmat + (r + 1) * N, c_out + r * nb);
    }
  }
  return out;
}

TelescopeReport telescoping_report(const DsfFactored& sys, double tol) {
  validate(sys);
  if (sys.family != "attention" || sys.eta.empty()) {
    throw PreconditionError(
        "telescoping holds for attention-built systems only");
  }
  const std::size_t L = sys.steps, d = sys.channels, n = sys.expansion;
  const std::size_t heads = sys.groups;
  const DsfDense dense = densify(sys);
  const KernelMatrix kernel =
      materialize_kernel(dense, std::max(L, kDefaultKernelCap));

  TelescopeReport report;
  report.tolerance = tol;
  std::vector<double> score(heads);
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      for (std::size_t h = 0; h < heads; ++h) {
        score[h] = dot(sys.phi_at(i, h), sys.psi_at(j, h), n);
      }
      const double* block = kernel.block(i, j);
      for (std::size_t r = 0; r < d; ++r) {
        const std::size_t h = sys.group_of(r);
        const double factor = score[h] / sys.eta[i * heads + h];
        for (std::size_t c = 0; c < d; ++c) {
          const double w_rc =
              sys.has_value_map() ? sys.value_map[r * d + c] : (r == c ? 1.0 : 0.0);
          const double residual = std::abs(block[r * d + c] - factor * w_rc);
          if (residual > report.max_residual) {
            report.max_residual = residual;
            report.arg_i = i;
            report.arg_j = j;
          }
        }
      }
    }
  }
  report.pass = report.max_residual <= tol;
  return report;
}

ScalarFitReport kernel_scalar_fit(const DsfFactored& sys) {
  validate(sys);
  const bool attention = sys.family == "attention";
  const bool s6 = sys.family == "s6";
  if (!attention && !s6) {
    throw PreconditionError(
        "scalar-fit diagnostics cover attention and s6 systems");
  }
  const std::size_t L = sys.steps, d = sys.channels, n = sys.expansion;

  // The fit concerns the recurrence part of the kernel, so any skip term is
  // dropped before materializing.
  DsfDense dense = densify(sys);
  dense.skip.clear();
  const KernelMatrix kernel =
      materialize_kernel(dense, std::max(L, kDefaultKernelCap));

  // Raw factor blocks M_ij, stored per (i, j <= i) pair.
  auto raw_entry = [&](std::size_t i, std::size_t j, std::size_t r,
                       std::size_t c) -> double {
    if (attention) {
      const std::size_t h = sys.group_of(r);
      const double score = dot(sys.phi_at(i, h), sys.psi_at(j, h), n);
      const double w_rc =
          sys.has_value_map() ? sys.value_map[r * d + c] : (r == c ? 1.0 : 0.0);
      return score * w_rc;
    }
    if (r != c) return 0.0;
    const double score = dot(sys.phi_at(i, 0), sys.psi_at(j, 0), n);
    return score * sys.in_scale[j * d + c];
  };

  ScalarFitReport report;
  for (std::size_t i = 0; i < L; ++i) {
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j <= i; ++j) {
      const double* block = kernel.block(i, j);
      for (std::size_t r = 0; r < d; ++r) {
        for (std::size_t c = 0; c < d; ++c) {
          const double m = raw_entry(i, j, r, c);
          num += block[r * d + c] * m;
          den += m * m;
        }
      }
    }
    const double alpha = den == 0.0 ? 0.0 : num / den;
    for (std::size_t j = 0; j <= i; ++j) {
      const double* block = kernel.block(i, j);
      for (std::size_t r = 0; r < d; ++r) {
        for (std::size_t c = 0; c < d; ++c) {
          const double residual =
              std::abs(block[r * d + c] - alpha * raw_entry(i, j, r, c));
          if (residual > report.max_residual) {
            report.max_residual = residual;
            report.arg_i = i;
            report.arg_j = j;
          }
        }
      }
    }
  }
  return report;
}

namespace {

SpectralProfile profile_from(const double* lambda, std::size_t steps,
                             std::size_t state_dim) {
  SpectralProfile profile;
  profile.max_abs.resize(steps);
  profile.min_abs.resize(steps);
  profile.running_prod.resize(steps);
  double running = 1.0;
  for (std::size_t i = 0; i < steps; ++i) {
    const double* row = lambda + i * state_dim;
    double hi = 0.0, lo = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < state_dim; ++k) {
      const double v = std::abs(row[k]);
      hi = std::max(hi, v);
      lo = std::min(lo, v);
    }
    running *= hi;
    profile.max_abs[i] = hi;
    profile.min_abs[i] = lo;
    profile.running_prod[i] = running;
  }
  return profile;
}

}  // namespace

SpectralProfile spectral_profile(const DsfDense& sys) {
  validate(sys);
  return profile_from(sys.lambda.data(), sys.steps, sys.state_dim);
}

SpectralProfile spectral_profile(const DsfFactored& sys) {
  validate(sys);
  return profile_from(sys.lambda.data(), sys.steps, sys.state_dim());
}

ConvergenceTable taylor_convergence_study(const Sequence& u,
                                          const AttentionWeights& w,
                                          const std::vector<std::size_t>& orders,
                                          double score_cap) {
  validate(w);
  if (w.heads != 1) {
    throw PreconditionError("the convergence study is single-head");
  }
  if (orders.empty()) throw ConfigError("need at least one order");
  for (std::size_t i = 1; i < orders.size(); ++i) {
    if (orders[i] <= orders[i - 1]) {
      throw ConfigError("orders must be strictly increasing");
    }
  }
  if (!(score_cap > 0.0)) throw ConfigError("score_cap must be positive");

  // Scale W_Q down until every causal score is inside [-cap, cap].
  const std::size_t L = u.length, d = w.channels, m = w.proj;
  std::vector<double> q(L * m), k(L * m);
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t r = 0; r < m; ++r) {
      q[i * m + r] = dot(w.w_q.data() + r * d, u.row(i), d);
      k[i * m + r] = dot(w.w_k.data() + r * d, u.row(i), d);
    }
  }
  double peak = 0.0;
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      peak = std::max(peak, std::abs(dot(q.data() + i * m, k.data() + j * m, m)));
    }
  }
  AttentionWeights scaled = w;
  if (peak > score_cap) {
    const double factor = score_cap / peak;
    for (double& v : scaled.w_q) v *= factor;
  }

  const Sequence oracle = softmax_attention_ref(u, scaled);

  ConvergenceTable table;
  table.score_cap = score_cap;
  for (std::size_t order : orders) {
    const DsfFactored sys = taylor_softmax_to_dsf(u, scaled, order);
    const Sequence y = run_sequential(sys, u);
    ConvergenceRow row;
    row.order = order;
    row.feature_dim = FeatureMap::taylor(m, order).output_dim();
    for (std::size_t i = 0; i < L * d; ++i) {
      const double err = std::abs(y.data[i] - oracle.data[i]);
      row.max_abs_err = std::max(row.max_abs_err, err);
      row.mean_abs_err += err;
    }
    if (L * d > 0) row.mean_abs_err /= static_cast<double>(L * d);
    table.rows.push_back(row);
  }
  return table;
}

// ---------------------------------------------------------------------------
// Serialization.
// ---------------------------------------------------------------------------

std::string TelescopeReport::to_json() const {
  auto os = json_stream();
  os << "{\"max_residual\":" << max_residual << ",\"arg_i\":" << arg_i
     << ",\"arg_j\":" << arg_j << ",\"tolerance\":" << tolerance
     << ",\"pass\":" << (pass ? "true" : "false") << "}";
  return os.str();
}

std::string ScalarFitReport::to_json() const {
  auto os = json_stream();
  os << "{\"max_residual\":" << max_residual << ",\"arg_i\":" << arg_i
     << ",\"arg_j\":" << arg_j << "}";
  return os.str();
}

std::string SpectralProfile::to_json() const {
  auto os = json_stream();
  auto arr = [&os](const std::vector<double>& v) {
    os << "[";
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) os << ",";
      os << v[i];
    }
    os << "]";
  };
  os << "{\"max_abs\":";
  arr(max_abs);
  os << ",\"min_abs\":";
  arr(min_abs);
  os << ",\"running_prod\":";
  arr(running_prod);
  os << "}";
  return os.str();
}

std::string SpectralProfile::to_csv() const {
  auto os = json_stream();
  os << "step,max_abs,min_abs,running_prod\n";
  for (std::size_t i = 0; i < max_abs.size(); ++i) {
    os << i << "," << max_abs[i] << "," << min_abs[i] << "," << running_prod[i]
       << "\n";
  }
  return os.str();
}

std::string ConvergenceTable::to_json() const {
  auto os = json_stream();
  os << "{\"score_cap\":" << score_cap << ",\"rows\":[";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i) os << ",";
    os << "{\"order\":" << rows[i].order
       << ",\"feature_dim\":" << rows[i].feature_dim
       << ",\"max_abs_err\":" << rows[i].max_abs_err
       << ",\"mean_abs_err\":" << rows[i].mean_abs_err << "}";
  }
  os << "]}";
  return os.str();
}

std::string ConvergenceTable::to_csv() const {
  auto os = json_stream();
  os << "order,feature_dim,max_abs_err,mean_abs_err\n";
  for (const ConvergenceRow& row : rows) {
    os << row.order << "," << row.feature_dim << "," << row.max_abs_err << ","
       << row.mean_abs_err << "\n";
  }
  return os.str();
}

}  // namespace dsf
