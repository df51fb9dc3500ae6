// SPDX-License-Identifier: Apache-2.0

#include "dsf/engines.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <thread>
#include <vector>

namespace dsf {

namespace {

void check_pairing(std::size_t sys_steps, std::size_t sys_channels,
                   const Sequence& u) {
  if (sys_channels != u.channels) {
    std::ostringstream os;
    os << "system has " << sys_channels << " channels but the sequence has "
       << u.channels;
    throw DimensionError(os.str());
  }
  if (sys_steps != u.length) {
    std::ostringstream os;
    os << "system covers " << sys_steps << " steps but the sequence has "
       << u.length;
    throw DimensionError(os.str());
  }
}

void check_digest(const DsfFactored& sys, const Sequence& u) {
  if (sys.input_digest != 0 && sys.input_digest != sequence_digest(u)) {
    throw PreconditionError(
        "factored system was built from a different sequence than the one "
        "being evaluated");
  }
}

// z = B_i u_i for a dense system.
void inject_dense(const DsfDense& sys, const Sequence& u, std::size_t i,
                  double* z) {
  const std::size_t N = sys.state_dim, d = sys.channels;
  const double* b = sys.input_at(i);
  const double* ui = u.row(i);
  for (std::size_t k = 0; k < N; ++k) {
    double acc = 0.0;
    const double* row = b + k * d;
    for (std::size_t c = 0; c < d; ++c) acc += row[c] * ui[c];
    z[k] = acc;
  }
}

// z = B_i u_i for a factored system; v must hold W_V u_i (or u_i itself when
// the value map is the identity).
void inject_factored(const DsfFactored& sys, std::size_t i, const double* v,
                     double* z) {
  const std::size_t n = sys.expansion, d = sys.channels;
  const double* scale = sys.in_scale_at(i);
  for (std::size_t c = 0; c < d; ++c) {
    const double* psi = sys.psi_at(i, sys.group_of(c));
    const double sv = scale[c] * v[c];
    double* zc = z + c * n;
    for (std::size_t r = 0; r < n; ++r) zc[r] = psi[r] * sv;
  }
}

void output_dense(const DsfDense& sys, const Sequence& u, std::size_t i,
                  const double* h, double* y) {
  const std::size_t N = sys.state_dim, d = sys.channels;
  const double* cmat = sys.output_at(i);
  for (std::size_t c = 0; c < d; ++c) {
    double acc = 0.0;
    const double* row = cmat + c * N;
    for (std::size_t k = 0; k < N; ++k) acc += row[k] * h[k];
    y[c] = acc;
  }
  if (sys.has_skip()) {
    const double* skip = sys.skip_at(i);
    const double* ui = u.row(i);
    for (std::size_t c = 0; c < d; ++c) y[c] += skip[c] * ui[c];
  }
}

void output_factored(const DsfFactored& sys, const Sequence& u, std::size_t i,
                     const double* h, double* y) {
  const std::size_t n = sys.expansion, d = sys.channels;
  for (std::size_t c = 0; c < d; ++c) {
    const double* phi = sys.phi_at(i, sys.group_of(c));
    const double* hc = h + c * n;
    double acc = 0.0;
    for (std::size_t r = 0; r < n; ++r) acc += phi[r] * hc[r];
    y[c] = acc;
  }
  if (sys.has_skip()) {
    const double* skip = sys.skip.data() + i * d;
    const double* ui = u.row(i);
    for (std::size_t c = 0; c < d; ++c) y[c] += skip[c] * ui[c];
  }
}

// Computes W_V u_i into v. Returns u's own row when the map is the identity.
const double* value_vector(const DsfFactored& sys, const Sequence& u,
                           std::size_t i, std::vector<double>& v) {
  if (!sys.has_value_map()) return u.row(i);
  const std::size_t d = sys.channels;
  const double* ui = u.row(i);
  for (std::size_t c = 0; c < d; ++c) {
    double acc = 0.0;
    const double* row = sys.value_map.data() + c * d;
    for (std::size_t cc = 0; cc < d; ++cc) acc += row[cc] * ui[cc];
    v[c] = acc;
  }
  return v.data();
}

// In-place inclusive scan of (a, z) pairs under
//   (a, z) o (a', z') = (a a', a' z + z')
// restricted to state columns [k0, k1). The recursion halves the step count,
// so the products are combined in a fixed tree order regardless of thread
// count; that order differs from the sequential one, which is why scan
// results match the recurrence only up to roundoff.
// scratch must hold at least 2 * steps * (k1 - k0) doubles; each recursion
// level carves its pair buffers out of it instead of allocating, which keeps
// the arithmetic identical while avoiding one heap round trip per level.
void scan_pairs(double* a, double* z, std::size_t steps, std::size_t stride,
                std::size_t k0, std::size_t k1, double* scratch) {
  if (steps <= 1) return;
  const std::size_t half = steps / 2;
  const std::size_t width = k1 - k0;
  double* ta = scratch;
  double* tz = scratch + half * width;

  for (std::size_t i = 0; i < half; ++i) {
    const double* a0 = a + (2 * i) * stride + k0;
    const double* z0 = z + (2 * i) * stride + k0;
    const double* a1 = a + (2 * i + 1) * stride + k0;
    const double* z1 = z + (2 * i + 1) * stride + k0;
    double* tar = ta + i * width;
    double* tzr = tz + i * width;
    for (std::size_t w = 0; w < width; ++w) {
      tzr[w] = a1[w] * z0[w] + z1[w];
      tar[w] = a0[w] * a1[w];
    }
  }

  scan_pairs(ta, tz, half, width, 0, width, scratch + 2 * half * width);

  for (std::size_t i = 0; i < half; ++i) {
    double* a1 = a + (2 * i + 1) * stride + k0;
    double* z1 = z + (2 * i + 1) * stride + k0;
    const double* tar = ta + i * width;
    const double* tzr = tz + i * width;
    for (std::size_t w = 0; w < width; ++w) {
      a1[w] = tar[w];
      z1[w] = tzr[w];
    }
  }
  for (std::size_t i = 1; i < half; ++i) {
    double* ae = a + (2 * i) * stride + k0;
    double* ze = z + (2 * i) * stride + k0;
    const double* tar = ta + (i - 1) * width;
    const double* tzr = tz + (i - 1) * width;
    for (std::size_t w = 0; w < width; ++w) {
      ze[w] = ae[w] * tzr[w] + ze[w];
      ae[w] = tar[w] * ae[w];
    }
  }
  if (steps % 2 == 1) {
    double* ae = a + (steps - 1) * stride + k0;
    double* ze = z + (steps - 1) * stride + k0;
    const double* tar = ta + (half - 1) * width;
    const double* tzr = tz + (half - 1) * width;
    for (std::size_t w = 0; w < width; ++w) {
      ze[w] = ae[w] * tzr[w] + ze[w];
      ae[w] = tar[w] * ae[w];
    }
  }
}

void scan_pairs_threaded(double* a, double* z, std::size_t steps,
                         std::size_t state_dim, std::size_t threads) {
  threads = std::max<std::size_t>(1, std::min(threads, state_dim));
  if (threads == 1) {
    // Columns never interact, so the serial path sweeps them in blocks and
    // reuses one small scratch arena; the per-column combine tree, and hence
    // every result bit, matches a single monolithic sweep.
    const std::size_t block = std::min<std::size_t>(state_dim, 64);
    std::vector<double> arena(2 * steps * block);
    for (std::size_t k0 = 0; k0 < state_dim; k0 += block) {
      const std::size_t k1 = std::min(state_dim, k0 + block);
      scan_pairs(a, z, steps, state_dim, k0, k1, arena.data());
    }
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  const std::size_t chunk = (state_dim + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t k0 = t * chunk;
    const std::size_t k1 = std::min(state_dim, k0 + chunk);
    if (k0 >= k1) break;
    pool.emplace_back([=] {
      std::vector<double> arena(2 * steps * (k1 - k0));
      scan_pairs(a, z, steps, state_dim, k0, k1, arena.data());
    });
  }
  for (auto& worker : pool) worker.join();
}

}  // namespace

Sequence run_sequential(const DsfDense& sys, const Sequence& u) {
  validate(sys);
  validate(u);
  check_pairing(sys.steps, sys.channels, u);

  const std::size_t L = sys.steps, N = sys.state_dim, d = sys.channels;
  Sequence y(L, d);
  std::vector<double> h(N, 0.0);
  if (sys.has_h_init()) h = sys.h_init;
  std::vector<double> z(N);

  for (std::size_t i = 0; i < L; ++i) {
    inject_dense(sys, u, i, z.data());
    const double* lam = sys.lambda_at(i);
    for (std::size_t k = 0; k < N; ++k) h[k] = lam[k] * h[k] + z[k];
    output_dense(sys, u, i, h.data(), y.row(i));
  }
  return y;
}

Sequence run_sequential(const DsfFactored& sys, const Sequence& u) {
  validate(sys);
  validate(u);
  check_pairing(sys.steps, sys.channels, u);
  check_digest(sys, u);

  const std::size_t L = sys.steps, N = sys.state_dim(), d = sys.channels;
  Sequence y(L, d);
  std::vector<double> h(N, 0.0);
  if (!sys.h_init.empty()) h = sys.h_init;
  std::vector<double> z(N), vbuf(d);

  for (std::size_t i = 0; i < L; ++i) {
    const double* v = value_vector(sys, u, i, vbuf);
    inject_factored(sys, i, v, z.data());
    const double* lam = sys.lambda_at(i);
    for (std::size_t k = 0; k < N; ++k) h[k] = lam[k] * h[k] + z[k];
    output_factored(sys, u, i, h.data(), y.row(i));
  }
  return y;
}

Sequence run_scan(const DsfDense& sys, const Sequence& u,
                  const ScanOptions& options) {
  validate(sys);
  validate(u);
  check_pairing(sys.steps, sys.channels, u);

  const std::size_t L = sys.steps, N = sys.state_dim, d = sys.channels;
  Sequence y(L, d);
  if (L == 0) return y;

  std::vector<double> a(sys.lambda);
  std::vector<double> z(L * N);
  for (std::size_t i = 0; i < L; ++i) inject_dense(sys, u, i, z.data() + i * N);
  if (sys.has_h_init()) {
    for (std::size_t k = 0; k < N; ++k) z[k] = a[k] * sys.h_init[k] + z[k];
  }

  scan_pairs_threaded(a.data(), z.data(), L, N, options.threads);

  for (std::size_t i = 0; i < L; ++i) {
    output_dense(sys, u, i, z.data() + i * N, y.row(i));
  }
  return y;
}

Sequence run_scan(const DsfFactored& sys, const Sequence& u,
                  const ScanOptions& options) {
  validate(sys);
  validate(u);
  check_pairing(sys.steps, sys.channels, u);
  check_digest(sys, u);

  const std::size_t L = sys.steps, N = sys.state_dim(), d = sys.channels;
  Sequence y(L, d);
  if (L == 0) return y;

  std::vector<double> a(sys.lambda);
  std::vector<double> z(L * N);
  std::vector<double> vbuf(d);
  for (std::size_t i = 0; i < L; ++i) {
    const double* v = value_vector(sys, u, i, vbuf);
    inject_factored(sys, i, v, z.data() + i * N);
  }
  if (!sys.h_init.empty()) {
    for (std::size_t k = 0; k < N; ++k) z[k] = a[k] * sys.h_init[k] + z[k];
  }

  scan_pairs_threaded(a.data(), z.data(), L, N, options.threads);

  for (std::size_t i = 0; i < L; ++i) {
    output_factored(sys, u, i, z.data() + i * N, y.row(i));
  }
  return y;
}

KernelMatrix materialize_kernel(const DsfDense& sys, std::size_t max_steps) {
  validate(sys);
  if (sys.steps > max_steps) {
    std::ostringstream os;
    os << "kernel materialization over " << sys.steps
       << " steps exceeds the cap of " << max_steps;
    throw CapExceededError(os.str());
  }
  if (sys.has_h_init()) {
    for (double v : sys.h_init) {
      if (v != 0.0) {
        throw PreconditionError(
            "the kernel view has no initial-state term; h_init must be zero");
      }
    }
  }

  const std::size_t L = sys.steps, N = sys.state_dim, d = sys.channels;
  KernelMatrix kernel;
  kernel.steps = L;
  kernel.channels = d;
  kernel.blocks.assign(L * (L + 1) / 2 * d * d, 0.0);

  // Column sweep: carry M = (prod_{k=j+1..i} Lambda_k) B_j forward in i.
  std::vector<double> m(N * d);
  for (std::size_t j = 0; j < L; ++j) {
    std::copy(sys.input_at(j), sys.input_at(j) + N * d, m.begin());
    for (std::size_t i = j; i < L; ++i) {
      if (i > j) {
        const double* lam = sys.lambda_at(i);
        for (std::size_t k = 0; k < N; ++k) {
          double* row = m.data() + k * d;
          for (std::size_t c = 0; c < d; ++c) row[c] *= lam[k];
        }
      }
      double* block = kernel.block(i, j);
      const double* cmat = sys.output_at(i);
      for (std::size_t r = 0; r < d; ++r) {
        const double* crow = cmat + r * N;
        for (std::size_t c = 0; c < d; ++c) {
          double acc = 0.0;
          for (std::size_t k = 0; k < N; ++k) acc += crow[k] * m[k * d + c];
          block[r * d + c] = acc;
        }
      }
      if (i == j && sys.has_skip()) {
        const double* skip = sys.skip_at(i);
        for (std::size_t r = 0; r < d; ++r) block[r * d + r] += skip[r];
      }
    }
  }
  return kernel;
}

Sequence apply_kernel(const KernelMatrix& kernel, const Sequence& u) {
  validate(u);
  check_pairing(kernel.steps, kernel.channels, u);

  const std::size_t L = kernel.steps, d = kernel.channels;
  Sequence y(L, d);
  for (std::size_t i = 0; i < L; ++i) {
    double* yi = y.row(i);
    for (std::size_t j = 0; j <= i; ++j) {
      const double* block = kernel.block(i, j);
      const double* uj = u.row(j);
      for (std::size_t r = 0; r < d; ++r) {
        double acc = 0.0;
        const double* row = block + r * d;
        for (std::size_t c = 0; c < d; ++c) acc += row[c] * uj[c];
        yi[r] += acc;
      }
    }
  }
  return y;
}

std::string EngineReport::to_json() const {
  std::ostringstream os;
  os.precision(17);
  os << "{\"engine\":\"" << engine << "\",\"wall_seconds\":" << wall_seconds
     << ",\"threads\":" << threads;
  if (max_abs_deviation) os << ",\"max_abs_deviation\":" << *max_abs_deviation;
  os << "}";
  return os.str();
}

}  // namespace dsf
