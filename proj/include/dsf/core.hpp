// SPDX-License-Identifier: Apache-2.0
//
// Core containers for diagonal linear time-varying recurrences
//
//   h_i = Lambda_i h_{i-1} + B_i u_i        h_{-1} = h_init (zeros by default)
//   y_i = C_i h_i + D_i u_i
//
// Lambda_i is diagonal and is always stored as a vector of its diagonal
// entries, one N-vector per step. Systems come in two flavours: DsfDense
// stores every per-step matrix explicitly, DsfFactored keeps the low-rank
// structure produced by the model adapters and is cheap enough to evaluate
// at long sequence lengths.

#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace dsf {

// ---------------------------------------------------------------------------
// Error taxonomy. Every failure the library can signal carries one of these
// codes; the CLI maps them to fixed process exit codes.
// ---------------------------------------------------------------------------

enum class ErrorCode {
  Dimension,      // shape mismatch or illegal dimension
  NonFinite,      // NaN or Inf where a finite value is required
  Io,             // filesystem failure
  Format,         // parse failure or malformed file contents
  CapExceeded,    // configured resource bound exceeded
  Normalization,  // attention normalizer is zero or has an illegal sign
  Precondition,   // caller broke an API contract
  Config,         // invalid configuration value
};

class DsfError : public std::runtime_error {
 public:
  DsfError(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }
  const char* name() const;

 private:
  ErrorCode code_;
};

#define DSF_DECLARE_ERROR(NAME, CODE)                   \
  class NAME : public DsfError {                        \
   public:                                              \
    explicit NAME(const std::string& message)           \
        : DsfError(ErrorCode::CODE, message) {}         \
  }

DSF_DECLARE_ERROR(DimensionError, Dimension);
DSF_DECLARE_ERROR(NonFiniteError, NonFinite);
DSF_DECLARE_ERROR(IoError, Io);
DSF_DECLARE_ERROR(FormatError, Format);
DSF_DECLARE_ERROR(CapExceededError, CapExceeded);
DSF_DECLARE_ERROR(NormalizationError, Normalization);
DSF_DECLARE_ERROR(PreconditionError, Precondition);
DSF_DECLARE_ERROR(ConfigError, Config);

#undef DSF_DECLARE_ERROR

// ---------------------------------------------------------------------------
// Sequence: L x d row-major array of 64-bit reals. L = 0 is a legal empty
// sequence; d must be at least 1. Construction validates finiteness.
// ---------------------------------------------------------------------------

struct Sequence {
  std::size_t length = 0;    // L, number of steps
  std::size_t channels = 0;  // d, values per step
  std::vector<double> data;  // row-major, length * channels entries

  Sequence() = default;
  Sequence(std::size_t length, std::size_t channels);
  Sequence(std::size_t length, std::size_t channels, std::vector<double> values);

  double* row(std::size_t i) { return data.data() + i * channels; }
  const double* row(std::size_t i) const { return data.data() + i * channels; }
  double& at(std::size_t i, std::size_t j) { return data[i * channels + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * channels + j]; }
};

// Throws DimensionError for d = 0 or a data size mismatch, NonFiniteError
// if any entry is NaN or Inf.
void validate(const Sequence& u);

// ---------------------------------------------------------------------------
// DsfDense: per-step matrices stored explicitly.
//   lambda:  L x N          diagonal of Lambda_i
//   input:   L x (N x d)    B_i, row-major
//   output:  L x (d x N)    C_i, row-major
//   skip:    L x d or empty diagonal of D_i (empty means D = 0)
//   h_init:  N or empty     initial state (empty means zeros)
// ---------------------------------------------------------------------------

struct DsfDense {
  std::size_t steps = 0;      // L
  std::size_t state_dim = 0;  // N
  std::size_t channels = 0;   // d
  std::vector<double> lambda;
  std::vector<double> input;
  std::vector<double> output;
  std::vector<double> skip;
  std::vector<double> h_init;

  const double* lambda_at(std::size_t i) const { return lambda.data() + i * state_dim; }
  const double* input_at(std::size_t i) const { return input.data() + i * state_dim * channels; }
  const double* output_at(std::size_t i) const { return output.data() + i * channels * state_dim; }
  const double* skip_at(std::size_t i) const { return skip.data() + i * channels; }
  bool has_skip() const { return !skip.empty(); }
  bool has_h_init() const { return !h_init.empty(); }
};

void validate(const DsfDense& sys);

// ---------------------------------------------------------------------------
// DsfFactored: the structured form shared by all adapters. The state is laid
// out channel-major: channel c owns the n entries [c*n, (c+1)*n). Channels
// are partitioned into `groups` contiguous blocks that share per-step factor
// vectors (one group for single-head attention and S6, one per head for
// multi-head attention, one per channel for the gated RNNs).
//
//   B_i block for channel c = in_scale[i][c] * psi_i[g(c)] * row c of W_V
//   C_i block for channel c = phi_i[g(c)]^T
//
// with g(c) = c * groups / d. An empty value_map means W_V = identity, in
// which case B_i u_i injects in_scale[i][c] * u_i[c] * psi_i[g(c)] into the
// block of channel c.
//
// `input_digest` pins the system to the sequence it was built from; the
// factored engine entry points refuse to run against a different sequence.
// ---------------------------------------------------------------------------

struct DsfFactored {
  std::size_t steps = 0;      // L
  std::size_t expansion = 0;  // n, per-channel state expansion
  std::size_t channels = 0;   // d
  std::size_t groups = 1;     // factor groups per step, divides channels
  std::size_t heads = 1;      // attention head count (1 for non-attention)

  std::vector<double> lambda;    // L x (n*d)
  std::vector<double> in_scale;  // L x d
  std::vector<double> psi;       // L x groups x n
  std::vector<double> phi;       // L x groups x n
  std::vector<double> value_map; // d x d, or empty for identity
  std::vector<double> skip;      // L x d, or empty
  std::vector<double> eta;       // L x groups normalizers (attention only)
  std::vector<double> h_init;    // n*d, or empty for zeros

  std::string family;            // "attention", "s6", "qlstm", "rglru" or ""
  std::uint64_t input_digest = 0;  // 0 = not bound to an input

  std::size_t state_dim() const { return expansion * channels; }
  std::size_t group_of(std::size_t c) const { return c * groups / channels; }
  const double* lambda_at(std::size_t i) const { return lambda.data() + i * state_dim(); }
  const double* in_scale_at(std::size_t i) const { return in_scale.data() + i * channels; }
  const double* psi_at(std::size_t i, std::size_t g) const {
    return psi.data() + (i * groups + g) * expansion;
  }
  const double* phi_at(std::size_t i, std::size_t g) const {
    return phi.data() + (i * groups + g) * expansion;
  }
  bool has_value_map() const { return !value_map.empty(); }
  bool has_skip() const { return !skip.empty(); }
};

void validate(const DsfFactored& sys);

// Expands a factored system into explicit per-step matrices.
DsfDense densify(const DsfFactored& sys);

// FNV-1a over the dimensions and raw bytes of the payload. Used to bind a
// factored system to the sequence it was derived from.
std::uint64_t sequence_digest(const Sequence& u);

// ---------------------------------------------------------------------------
// KernelMatrix: the unrolled convolution view. Block (i, j) for j < i is
// C_i (prod_{k=j+1..i} Lambda_k) B_j, the diagonal block is C_i B_i + D_i,
// and everything above the diagonal is zero by causality. Only the lower
// triangle is stored; entry() reads zeros above the diagonal.
// ---------------------------------------------------------------------------

struct KernelMatrix {
  std::size_t steps = 0;     // L
  std::size_t channels = 0;  // d
  // Packed lower triangle: block row i holds i+1 blocks of d*d doubles.
  std::vector<double> blocks;

  std::size_t block_offset(std::size_t i, std::size_t j) const {
    return (i * (i + 1) / 2 + j) * channels * channels;
  }
  const double* block(std::size_t i, std::size_t j) const {
    return blocks.data() + block_offset(i, j);
  }
  double* block(std::size_t i, std::size_t j) {
    return blocks.data() + block_offset(i, j);
  }
  double entry(std::size_t i, std::size_t j, std::size_t r, std::size_t c) const {
    if (j > i) return 0.0;
    return block(i, j)[r * channels + c];
  }
};

}  // namespace dsf
