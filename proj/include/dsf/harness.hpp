// SPDX-License-Identifier: Apache-2.0
//
// Verification harness: seeded generators, output comparison and the
// scaling benchmark.
//
// All randomness in the project flows through SplitMix64 so results are
// bit-reproducible across platforms and runs. The generator is, exactly:
//
//   next(): state += 0x9E3779B97F4A7C15
//           z = state
//           z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//           z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//           return z ^ (z >> 31)
//
// bounded(n) = next() % n, uniform01() = (next() >> 11) * 2^-53, and
// uniform(lo, hi) = lo + (hi - lo) * uniform01().

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dsf/core.hpp"
#include "dsf/reference.hpp"

namespace dsf {

struct SplitMix64 {
  std::uint64_t state = 0;

  explicit SplitMix64(std::uint64_t seed) : state(seed) {}

  std::uint64_t next() {
    state += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t bounded(std::uint64_t n) { return next() % n; }

  double uniform01() {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
};

// ---------------------------------------------------------------------------
// Multi-query associative recall sequences.
//
// Layout for vocab V (even), K pairs, length L, all driven by one
// SplitMix64(seed) stream in this order:
//   1. keys: the first K entries of a partial Fisher-Yates shuffle of
//      [0, V/2), one bounded() draw per entry;
//   2. values: K draws of V/2 + bounded(V/2);
//   3. query positions: partial Fisher-Yates over [2K, L), then sorted
//      ascending.
// tokens[2t] = key_t, tokens[2t+1] = value_t, the t-th sorted query position
// repeats key_t, every other position holds the filler token V. The target
// at each query is the queried key's value.
// ---------------------------------------------------------------------------

struct MqarSpec {
  std::size_t vocab = 0;   // V, must be even and >= 2K
  std::size_t pairs = 0;   // K, must be >= 1
  std::size_t length = 0;  // L, must be >= 3K
  std::uint64_t seed = 0;
};

struct MqarSample {
  std::vector<std::int64_t> tokens;           // L
  std::vector<std::size_t> query_positions;   // K, ascending
  std::vector<std::int64_t> targets;          // K

  std::string to_json() const;
};

MqarSample mqar_generate(const MqarSpec& spec);  // ConfigError on bad spec

// ---------------------------------------------------------------------------
// Output comparison.
// ---------------------------------------------------------------------------

struct DiffReport {
  double max_abs = 0.0;
  double mean_abs = 0.0;
  double max_rel = 0.0;  // |a-b| / max(|a|, |b|, 1e-30)
  std::size_t arg_step = 0, arg_channel = 0;  // location of max_abs
  double tolerance = 0.0;
  bool pass = false;

  std::string to_json() const;
};

// Shapes must match exactly (DimensionError otherwise). pass is
// max_abs <= tolerance.
DiffReport compare(const Sequence& a, const Sequence& b, double tolerance);

// ---------------------------------------------------------------------------
// Seeded generators for inputs, weights and raw dense systems.
// ---------------------------------------------------------------------------

Sequence random_sequence(std::uint64_t seed, std::size_t length,
                         std::size_t channels, double lo = -1.0,
                         double hi = 1.0);

AttentionWeights random_attention_weights(std::uint64_t seed, std::size_t d,
                                          std::size_t m, std::size_t heads = 1,
                                          bool with_eta = false);
S6Weights random_s6_weights(std::uint64_t seed, std::size_t d, std::size_t n,
                            std::size_t p, bool scalar_a = false,
                            bool with_skip = false);
QlstmWeights random_qlstm_weights(std::uint64_t seed, std::size_t d);
RgLruWeights random_rglru_weights(std::uint64_t seed, std::size_t d,
                                  double c = 8.0);

// Raw dense system with |lambda| <= lambda_bound and all other entries
// uniform in (-1, 1). h_init is zero.
DsfDense random_dense_system(std::uint64_t seed, std::size_t steps,
                             std::size_t state_dim, std::size_t channels,
                             double lambda_bound = 1.05, bool with_skip = false);

// ---------------------------------------------------------------------------
// Scaling benchmark. Registered kinds:
//   "softmax"  quadratic softmax attention oracle
//   "linear"   linear-attention adapter evaluated with the factored scan
//   "qlstm"    qLSTM adapter evaluated with the factored scan
// Attention kinds use proj = expansion so the per-channel state is n wide.
// Lengths must be strictly increasing and repeats >= 1 (ConfigError).
// Each timing row is the median of `repeats` wall-clock runs; slopes are
// least-squares fits in log-log space. Runs single-threaded.
// ---------------------------------------------------------------------------

struct BenchSpec {
  std::vector<std::string> kinds = {"softmax", "linear"};
  std::vector<std::size_t> lengths = {1024, 2048, 4096, 8192};
  std::size_t channels = 32;   // d
  std::size_t expansion = 16;  // n
  std::size_t repeats = 3;
  std::uint64_t seed = 0;
};

struct BenchRow {
  std::string kind;
  std::size_t length = 0;
  double seconds = 0.0;
  std::size_t bytes_estimate = 0;  // analytic peak working set
};

struct ScalingReport {
  std::vector<BenchRow> rows;
  std::map<std::string, double> slopes;
  bool monotone = true;  // false if any kind's times decrease with L

  std::string to_json() const;
  std::string to_csv() const;
};

ScalingReport bench_scaling(const BenchSpec& spec);

}  // namespace dsf
