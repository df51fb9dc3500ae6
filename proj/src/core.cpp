// SPDX-License-Identifier: Apache-2.0

#include "dsf/core.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

namespace dsf {

const char* DsfError::name() const {
  switch (code_) {
    case ErrorCode::Dimension: return "DimensionError";
    case ErrorCode::NonFinite: return "NonFiniteError";
    case ErrorCode::Io: return "IoError";
    case ErrorCode::Format: return "FormatError";
    case ErrorCode::CapExceeded: return "CapExceededError";
    case ErrorCode::Normalization: return "NormalizationError";
    case ErrorCode::Precondition: return "PreconditionError";
    case ErrorCode::Config: return "ConfigError";
  }
  return "DsfError";
}

namespace {

void require_finite(const std::vector<double>& values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw NonFiniteError(std::string(what) + " contains a non-finite value");
    }
  }
}

std::string dim_msg(const char* what, std::size_t got, std::size_t want) {
  std::ostringstream os;
  os << what << ": expected " << want << " entries, got " << got;
  return os.str();
}

}  // namespace

Sequence::Sequence(std::size_t length, std::size_t channels)
    : length(length), channels(channels), data(length * channels, 0.0) {
  validate(*this);
}

Sequence::Sequence(std::size_t length, std::size_t channels,
                   std::vector<double> values)
    : length(length), channels(channels), data(std::move(values)) {
  validate(*this);
}

void validate(const Sequence& u) {
  if (u.channels == 0) throw DimensionError("sequence needs at least one channel");
  if (u.data.size() != u.length * u.channels) {
    throw DimensionError(dim_msg("sequence data", u.data.size(), u.length * u.channels));
  }
  require_finite(u.data, "sequence");
}

void validate(const DsfDense& sys) {
  if (sys.channels == 0) throw DimensionError("system needs at least one channel");
  if (sys.state_dim == 0) throw DimensionError("system needs a nonzero state dimension");
  const std::size_t L = sys.steps, N = sys.state_dim, d = sys.channels;
  if (sys.lambda.size() != L * N) {
    throw DimensionError(dim_msg("lambda", sys.lambda.size(), L * N));
  }
  if (sys.input.size() != L * N * d) {
    throw DimensionError(dim_msg("input maps", sys.input.size(), L * N * d));
  }
  if (sys.output.size() != L * d * N) {
    throw DimensionError(dim_msg("output maps", sys.output.size(), L * d * N));
  }
  if (!sys.skip.empty() && sys.skip.size() != L * d) {
    throw DimensionError(dim_msg("skip", sys.skip.size(), L * d));
  }
  if (!sys.h_init.empty() && sys.h_init.size() != N) {
    throw DimensionError(dim_msg("h_init", sys.h_init.size(), N));
  }
  require_finite(sys.lambda, "lambda");
  require_finite(sys.input, "input maps");
  require_finite(sys.output, "output maps");
  require_finite(sys.skip, "skip");
  require_finite(sys.h_init, "h_init");
}

void validate(const DsfFactored& sys) {
  if (sys.channels == 0) throw DimensionError("system needs at least one channel");
  if (sys.expansion == 0) throw DimensionError("state expansion must be at least 1");
  if (sys.groups == 0 || sys.channels % sys.groups != 0) {
    throw DimensionError("factor groups must evenly divide the channels");
  }
  const std::size_t L = sys.steps, n = sys.expansion, d = sys.channels;
  const std::size_t N = n * d, g = sys.groups;
  if (sys.lambda.size() != L * N) {
    throw DimensionError(dim_msg("lambda", sys.lambda.size(), L * N));
  }
  if (sys.in_scale.size() != L * d) {
    throw DimensionError(dim_msg("in_scale", sys.in_scale.size(), L * d));
  }
  if (sys.psi.size() != L * g * n) {
    throw DimensionError(dim_msg("psi", sys.psi.size(), L * g * n));
  }
  if (sys.phi.size() != L * g * n) {
    throw DimensionError(dim_msg("phi", sys.phi.size(), L * g * n));
  }
  if (!sys.value_map.empty() && sys.value_map.size() != d * d) {
    throw DimensionError(dim_msg("value map", sys.value_map.size(), d * d));
  }
  if (!sys.skip.empty() && sys.skip.size() != L * d) {
    throw DimensionError(dim_msg("skip", sys.skip.size(), L * d));
  }
  if (!sys.eta.empty() && sys.eta.size() != L * g) {
    throw DimensionError(dim_msg("eta", sys.eta.size(), L * g));
  }
  if (!sys.h_init.empty() && sys.h_init.size() != N) {
    throw DimensionError(dim_msg("h_init", sys.h_init.size(), N));
  }
  require_finite(sys.lambda, "lambda");
  require_finite(sys.in_scale, "in_scale");
  require_finite(sys.psi, "psi");
  require_finite(sys.phi, "phi");
  require_finite(sys.value_map, "value map");
  require_finite(sys.skip, "skip");
  require_finite(sys.eta, "eta");
  require_finite(sys.h_init, "h_init");
}

DsfDense densify(const DsfFactored& sys) {
  validate(sys);
  const std::size_t L = sys.steps, n = sys.expansion, d = sys.channels;
  const std::size_t N = n * d;

  DsfDense dense;
  dense.steps = L;
  dense.state_dim = N;
  dense.channels = d;
  dense.lambda = sys.lambda;
  dense.input.assign(L * N * d, 0.0);
  dense.output.assign(L * d * N, 0.0);
  dense.skip = sys.skip;
  dense.h_init = sys.h_init;

  for (std::size_t i = 0; i < L; ++i) {
    double* b = dense.input.data() + i * N * d;
    double* cmat = dense.output.data() + i * d * N;
    const double* scale = sys.in_scale_at(i);
    for (std::size_t c = 0; c < d; ++c) {
      const std::size_t g = sys.group_of(c);
      const double* psi = sys.psi_at(i, g);
      const double* phi = sys.phi_at(i, g);
      for (std::size_t r = 0; r < n; ++r) {
        const std::size_t row = c * n + r;
        if (sys.has_value_map()) {
          for (std::size_t cc = 0; cc < d; ++cc) {
            b[row * d + cc] = scale[c] * psi[r] * sys.value_map[c * d + cc];
          }
        } else {
          b[row * d + c] = scale[c] * psi[r];
        }
        cmat[c * N + row] = phi[r];
      }
    }
  }
  return dense;
}

std::uint64_t sequence_digest(const Sequence& u) {
  std::uint64_t h = 0xCBF29CE484222325ULL;  // FNV-1a offset basis
  auto mix = [&h](const unsigned char* bytes, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) {
      h ^= bytes[i];
      h *= 0x100000001B3ULL;
    }
  };
  std::uint64_t dims[2] = {u.length, u.channels};
  mix(reinterpret_cast<const unsigned char*>(dims), sizeof(dims));
  mix(reinterpret_cast<const unsigned char*>(u.data.data()),
      u.data.size() * sizeof(double));
  return h == 0 ? 1 : h;  // reserve 0 for "not bound"
}

}  // namespace dsf
