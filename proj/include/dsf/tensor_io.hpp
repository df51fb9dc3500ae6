// SPDX-License-Identifier: Apache-2.0
//
// On-disk tensor format (.dsft) and weight bundles.
//
// A .dsft file is a single-line JSON manifest, a newline, then the raw
// little-endian IEEE-754 binary64 payload in row-major order. The manifest
// fields appear in this exact order:
//
//   {"name":"...","shape":[...],"dtype":"r64","byte_order":"little"}
//
// A weight bundle is a directory holding model.json plus one .dsft file per
// parameter. model.json records the weight family, its dimensions and the
// parameter list, so a bundle round-trips bit-exactly.

#pragma once

#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "dsf/core.hpp"
#include "dsf/reference.hpp"

namespace dsf {

struct TensorFile {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> data;  // product(shape) entries
};

// Throws IoError on filesystem failures. The manifest is written with the
// fixed field order above; payload bytes are the in-memory doubles.
void save_tensor(const std::filesystem::path& path, const TensorFile& tensor);

// Throws IoError if the file cannot be opened and FormatError for a bad
// manifest, wrong dtype or byte order, or a payload shorter than the shape
// demands.
TensorFile load_tensor(const std::filesystem::path& path);

// Rank-2 convenience wrappers for sequences.
void save_sequence(const std::filesystem::path& path, const std::string& name,
                   const Sequence& u);
Sequence load_sequence(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Weight bundles.
// ---------------------------------------------------------------------------

struct WeightsBundle {
  std::string family;  // "attention", "s6", "qlstm", "rglru"
  std::variant<AttentionWeights, S6Weights, QlstmWeights, RgLruWeights> weights;
};

void save_bundle(const std::filesystem::path& dir, const WeightsBundle& bundle);
WeightsBundle load_bundle(const std::filesystem::path& dir);

}  // namespace dsf
