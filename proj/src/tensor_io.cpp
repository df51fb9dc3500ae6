// SPDX-License-Identifier: Apache-2.0

#include "dsf/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace dsf {

namespace {

using ordered_json = nlohmann::ordered_json;

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t s : shape) n *= s;
  return n;
}

void write_payload(std::ofstream& out, const std::vector<double>& data) {
  static_assert(sizeof(double) == 8);
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * 8));
  } else {
    for (double v : data) {
      char bytes[8];
      std::memcpy(bytes, &v, 8);
      std::swap(bytes[0], bytes[7]);
      std::swap(bytes[1], bytes[6]);
      std::swap(bytes[2], bytes[5]);
      std::swap(bytes[3], bytes[4]);
      out.write(bytes, 8);
    }
  }
}

std::vector<double> read_payload(std::ifstream& in, std::size_t count,
                                 const std::filesystem::path& path) {
  std::vector<double> data(count);
  in.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(count * 8));
  if (static_cast<std::size_t>(in.gcount()) != count * 8) {
    throw FormatError("truncated payload in " + path.string());
  }
  if constexpr (std::endian::native == std::endian::big) {
    for (double& v : data) {
      char bytes[8];
      std::memcpy(bytes, &v, 8);
      std::swap(bytes[0], bytes[7]);
      std::swap(bytes[1], bytes[6]);
      std::swap(bytes[2], bytes[5]);
      std::swap(bytes[3], bytes[4]);
      std::memcpy(&v, bytes, 8);
    }
  }
  // The payload must end the file.
  char extra;
  in.read(&extra, 1);
  if (in.gcount() != 0) {
    throw FormatError("trailing bytes after payload in " + path.string());
  }
  return data;
}

}  // namespace

void save_tensor(const std::filesystem::path& path, const TensorFile& tensor) {
  if (tensor.data.size() != shape_product(tensor.shape)) {
    throw DimensionError("tensor data does not match its shape");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());

  ordered_json manifest;
  manifest["name"] = tensor.name;
  manifest["shape"] = tensor.shape;
  manifest["dtype"] = "r64";
  manifest["byte_order"] = "little";
  out << manifest.dump() << '\n';
  write_payload(out, tensor.data);
  if (!out) throw IoError("write failed: " + path.string());
}

TensorFile load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());

  std::string line;
  if (!std::getline(in, line)) {
    throw FormatError("missing manifest line in " + path.string());
  }
  ordered_json manifest;
  try {
    manifest = ordered_json::parse(line);
  } catch (const std::exception& e) {
    throw FormatError("bad manifest in " + path.string() + ": " + e.what());
  }
  if (!manifest.is_object() || !manifest.contains("name") ||
      !manifest.contains("shape") || !manifest.contains("dtype") ||
      !manifest.contains("byte_order")) {
    throw FormatError("manifest missing required fields in " + path.string());
  }
  if (manifest["dtype"] != "r64") {
    throw FormatError("unsupported dtype in " + path.string());
  }
  if (manifest["byte_order"] != "little") {
    throw FormatError("unsupported byte order in " + path.string());
  }

  TensorFile tensor;
  try {
    tensor.name = manifest["name"].get<std::string>();
    tensor.shape = manifest["shape"].get<std::vector<std::size_t>>();
  } catch (const std::exception& e) {
    throw FormatError("bad manifest field in " + path.string() + ": " + e.what());
  }
  tensor.data = read_payload(in, shape_product(tensor.shape), path);
  return tensor;
}

void save_sequence(const std::filesystem::path& path, const std::string& name,
                   const Sequence& u) {
  save_tensor(path, TensorFile{name, {u.length, u.channels}, u.data});
}

Sequence load_sequence(const std::filesystem::path& path) {
  TensorFile t = load_tensor(path);
  if (t.shape.size() != 2) {
    throw FormatError("sequence tensor must be rank 2: " + path.string());
  }
  return Sequence(t.shape[0], t.shape[1], std::move(t.data));
}

// ---------------------------------------------------------------------------
// Weight bundles.
// ---------------------------------------------------------------------------

namespace {

void save_param(const std::filesystem::path& dir, const std::string& name,
                std::vector<std::size_t> shape,
                const std::vector<double>& data) {
  save_tensor(dir / (name + ".dsft"), TensorFile{name, std::move(shape), data});
}

std::vector<double> load_param(const std::filesystem::path& dir,
                               const std::string& name,
                               const std::vector<std::size_t>& shape) {
  TensorFile t = load_tensor(dir / (name + ".dsft"));
  if (t.shape != shape) {
    throw FormatError("parameter " + name + " has unexpected shape in " +
                      dir.string());
  }
  return std::move(t.data);
}

std::size_t size_field(const ordered_json& model, const char* key) {
  if (!model.contains(key) || !model[key].is_number_unsigned()) {
    throw FormatError(std::string("model.json missing field: ") + key);
  }
  return model[key].get<std::size_t>();
}

}  // namespace

void save_bundle(const std::filesystem::path& dir,
                 const WeightsBundle& bundle) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory: " + dir.string());

  ordered_json model;
  model["family"] = bundle.family;

  if (bundle.family == "attention") {
    const auto& w = std::get<AttentionWeights>(bundle.weights);
    validate(w);
    model["channels"] = w.channels;
    model["proj"] = w.proj;
    model["heads"] = w.heads;
    model["has_eta"] = w.has_eta();
    save_param(dir, "w_q", {w.proj, w.channels}, w.w_q);
    save_param(dir, "w_k", {w.proj, w.channels}, w.w_k);
    save_param(dir, "w_v", {w.channels, w.channels}, w.w_v);
    if (w.has_eta()) save_param(dir, "w_eta", {1, w.channels}, w.w_eta);
  } else if (bundle.family == "s6") {
    const auto& w = std::get<S6Weights>(bundle.weights);
    validate(w);
    model["channels"] = w.channels;
    model["state"] = w.state;
    model["rank"] = w.rank;
    model["has_skip"] = w.has_skip();
    save_param(dir, "a", {w.state, w.channels}, w.a);
    save_param(dir, "w_b", {w.state, w.channels}, w.w_b);
    save_param(dir, "w_c", {w.state, w.channels}, w.w_c);
    save_param(dir, "w_delta", {w.channels, w.rank}, w.w_delta);
    save_param(dir, "w_u", {w.rank, w.channels}, w.w_u);
    save_param(dir, "b_delta", {w.channels}, w.b_delta);
    if (w.has_skip()) save_param(dir, "w_skip", {w.channels}, w.w_skip);
  } else if (bundle.family == "qlstm") {
    const auto& w = std::get<QlstmWeights>(bundle.weights);
    validate(w);
    model["channels"] = w.channels;
    const std::vector<std::size_t> sq{w.channels, w.channels};
    save_param(dir, "w_f", sq, w.w_f);
    save_param(dir, "w_i", sq, w.w_i);
    save_param(dir, "w_u", sq, w.w_u);
    save_param(dir, "w_o", sq, w.w_o);
  } else if (bundle.family == "rglru") {
    const auto& w = std::get<RgLruWeights>(bundle.weights);
    validate(w);
    model["channels"] = w.channels;
    model["c"] = w.c;
    const std::vector<std::size_t> sq{w.channels, w.channels};
    save_param(dir, "w_r", sq, w.w_r);
    save_param(dir, "w_b", sq, w.w_b);
    save_param(dir, "lambda_param", {w.channels}, w.lambda_param);
  } else {
    throw ConfigError("unknown weight family: " + bundle.family);
  }

  std::ofstream out(dir / "model.json", std::ios::trunc);
  if (!out) throw IoError("cannot write model.json in " + dir.string());
  out << model.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + (dir / "model.json").string());
}

WeightsBundle load_bundle(const std::filesystem::path& dir) {
  std::ifstream in(dir / "model.json");
  if (!in) throw IoError("cannot open: " + (dir / "model.json").string());
  ordered_json model;
  try {
    model = ordered_json::parse(in);
  } catch (const std::exception& e) {
    throw FormatError("bad model.json in " + dir.string() + ": " + e.what());
  }
  if (!model.contains("family") || !model["family"].is_string()) {
    throw FormatError("model.json missing family in " + dir.string());
  }

  WeightsBundle bundle;
  bundle.family = model["family"].get<std::string>();

  if (bundle.family == "attention") {
    AttentionWeights w;
    w.channels = size_field(model, "channels");
    w.proj = size_field(model, "proj");
    w.heads = size_field(model, "heads");
    w.w_q = load_param(dir, "w_q", {w.proj, w.channels});
    w.w_k = load_param(dir, "w_k", {w.proj, w.channels});
    w.w_v = load_param(dir, "w_v", {w.channels, w.channels});
    if (model.value("has_eta", false)) {
      w.w_eta = load_param(dir, "w_eta", {1, w.channels});
    }
    validate(w);
    bundle.weights = std::move(w);
  } else if (bundle.family == "s6") {
    S6Weights w;
    w.channels = size_field(model, "channels");
    w.state = size_field(model, "state");
    w.rank = size_field(model, "rank");
    w.a = load_param(dir, "a", {w.state, w.channels});
    w.w_b = load_param(dir, "w_b", {w.state, w.channels});
    w.w_c = load_param(dir, "w_c", {w.state, w.channels});
    w.w_delta = load_param(dir, "w_delta", {w.channels, w.rank});
    w.w_u = load_param(dir, "w_u", {w.rank, w.channels});
    w.b_delta = load_param(dir, "b_delta", {w.channels});
    if (model.value("has_skip", false)) {
      w.w_skip = load_param(dir, "w_skip", {w.channels});
    }
    validate(w);
    bundle.weights = std::move(w);
  } else if (bundle.family == "qlstm") {
    QlstmWeights w;
    w.channels = size_field(model, "channels");
    const std::vector<std::size_t> sq{w.channels, w.channels};
    w.w_f = load_param(dir, "w_f", sq);
    w.w_i = load_param(dir, "w_i", sq);
    w.w_u = load_param(dir, "w_u", sq);
    w.w_o = load_param(dir, "w_o", sq);
    validate(w);
    bundle.weights = std::move(w);
  } else if (bundle.family == "rglru") {
    RgLruWeights w;
    w.channels = size_field(model, "channels");
    if (!model.contains("c") || !model["c"].is_number()) {
      throw FormatError("model.json missing field: c");
    }
    w.c = model["c"].get<double>();
    const std::vector<std::size_t> sq{w.channels, w.channels};
    w.w_r = load_param(dir, "w_r", sq);
    w.w_b = load_param(dir, "w_b", sq);
    w.lambda_param = load_param(dir, "lambda_param", {w.channels});
    validate(w);
    bundle.weights = std::move(w);
  } else {
    throw FormatError("unknown weight family in model.json: " + bundle.family);
  }
  return bundle;
}

}  // namespace dsf
