// SPDX-License-Identifier: Apache-2.0
//
// dsf: convert sequence models to diagonal linear recurrences, run them,
// compare them against their oracles, and poke at the results.
//
// Exit codes: 0 success (and, for compare/embed, the comparison passed),
// 1 comparison failed, 2 usage or configuration error, 3 resource cap
// exceeded, 4 dimension or non-finite data error, 5 normalizer error,
// 6 I/O or file format error.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dsf/adapters.hpp"
#include "dsf/analysis.hpp"
#include "dsf/core.hpp"
#include "dsf/engines.hpp"
#include "dsf/harness.hpp"
#include "dsf/reference.hpp"
#include "dsf/tensor_io.hpp"

namespace {

using namespace dsf;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::Config:
    case ErrorCode::Precondition: return 2;
    case ErrorCode::CapExceeded: return 3;
    case ErrorCode::Dimension:
    case ErrorCode::NonFinite: return 4;
    case ErrorCode::Normalization: return 5;
    case ErrorCode::Io:
    case ErrorCode::Format: return 6;
  }
  return 2;
}

std::string json_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') {
      out += '\\';
      out += c;
    } else if (c == '\n') {
      out += "\\n";
    } else {
      out += c;
    }
  }
  return out;
}

void print_error(const std::string& name, const std::string& message) {
  std::cout << "{\"error\":\"" << json_escape(name) << "\",\"message\":\""
            << json_escape(message) << "\"}\n";
}

// A kind string names an adapter plus the weights it needs. taylor:<p> and
// multihead:<s> carry a numeric suffix.
struct Kind {
  std::string base;      // linear, normalized-*, taylor, s6, s6-revsig, ...
  std::size_t number = 0;  // p for taylor, s for multihead
};

class UnknownKindError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Kind parse_kind(const std::string& text) {
  const auto colon = text.find(':');
  const std::string base = text.substr(0, colon);
  Kind kind{base, 0};
  if (base == "taylor" || base == "multihead") {
    if (colon == std::string::npos || colon + 1 == text.size()) {
      throw UnknownKindError("kind " + base + " needs a numeric suffix, e.g. " +
                             base + ":2");
    }
    try {
      kind.number = std::stoul(text.substr(colon + 1));
    } catch (const std::exception&) {
      throw UnknownKindError("bad numeric suffix in kind: " + text);
    }
    if (kind.number == 0) {
      throw UnknownKindError("kind suffix must be positive: " + text);
    }
    return kind;
  }
  if (colon != std::string::npos) throw UnknownKindError("unknown kind: " + text);
  static const char* known[] = {"linear",  "normalized-exp", "normalized-softplus",
                                "normalized-sigmoid", "s6", "s6-revsig",
                                "qlstm",   "rglru"};
  for (const char* k : known) {
    if (base == k) return kind;
  }
  throw UnknownKindError("unknown kind: " + text);
}

bool is_attention(const Kind& kind) {
  return kind.base == "linear" || kind.base == "taylor" ||
         kind.base == "multihead" || kind.base.rfind("normalized-", 0) == 0;
}

// Everything a subcommand needs to assemble a model run.
struct ModelArgs {
  std::string kind_text = "linear";
  std::string weights_path;
  std::string input_path;
  bool random_weights = false;
  std::uint64_t seed = 0;
  std::size_t length = 32;     // L, for generated inputs
  std::size_t channels = 4;    // d
  std::size_t proj = 4;        // m, attention projections
  std::size_t state = 4;       // n, S6 state per channel
  std::size_t rank = 2;        // p, S6 delta rank
  bool scalar_a = false;       // S6: constant decay grid
  bool with_skip = false;      // S6: include the skip term
};

void add_model_flags(CLI::App* cmd, ModelArgs* args) {
  cmd->add_option("--kind", args->kind_text,
                  "model kind: linear, normalized-exp, normalized-softplus, "
                  "normalized-sigmoid, taylor:<p>, s6, s6-revsig, qlstm, "
                  "rglru, multihead:<s>");
  cmd->add_option("--weights", args->weights_path, "weights bundle directory");
  cmd->add_option("--input", args->input_path, "input sequence (.dsft)");
  cmd->add_flag("--random-weights", args->random_weights,
                "generate weights from --seed instead of loading a bundle");
  cmd->add_option("--seed", args->seed, "RNG seed for generated data");
  cmd->add_option("--L", args->length, "generated input length");
  cmd->add_option("--d", args->channels, "generated model channels");
  cmd->add_option("--m", args->proj, "attention projection width");
  cmd->add_option("--n", args->state, "S6 state dimension per channel");
  cmd->add_option("--p", args->rank, "S6 delta rank");
  cmd->add_flag("--scalar-a", args->scalar_a, "S6: use a constant decay grid");
  cmd->add_flag("--with-skip", args->with_skip, "S6: include the skip term");
}

struct Model {
  Kind kind;
  Sequence input;
  WeightsBundle bundle;
};

Model assemble_model(const ModelArgs& args) {
  Model model;
  model.kind = parse_kind(args.kind_text);

  if (!args.input_path.empty()) {
    model.input = load_sequence(args.input_path);
  } else {
    model.input = random_sequence(args.seed, args.length, args.channels);
  }
  const std::size_t d = model.input.channels;

  if (!args.weights_path.empty()) {
    model.bundle = load_bundle(args.weights_path);
  } else if (args.random_weights || args.input_path.empty()) {
    // Derive the weight seed from the data seed so one --seed controls both.
    const std::uint64_t wseed = args.seed + 0x51ED0000;
    if (is_attention(model.kind)) {
      const bool with_eta = model.kind.base.rfind("normalized-", 0) == 0;
      const std::size_t heads =
          model.kind.base == "multihead" ? model.kind.number : 1;
      model.bundle.family = "attention";
      model.bundle.weights =
          random_attention_weights(wseed, d, args.proj, heads, with_eta);
    } else if (model.kind.base == "s6" || model.kind.base == "s6-revsig") {
      model.bundle.family = "s6";
      model.bundle.weights =
          random_s6_weights(wseed, d, args.state, args.rank,
                            args.scalar_a || model.kind.base == "s6-revsig",
                            args.with_skip);
    } else if (model.kind.base == "qlstm") {
      model.bundle.family = "qlstm";
      model.bundle.weights = random_qlstm_weights(wseed, d);
    } else {
      model.bundle.family = "rglru";
      model.bundle.weights = random_rglru_weights(wseed, d);
    }
  } else {
    throw ConfigError("need --weights or --random-weights");
  }
  return model;
}

const AttentionWeights& attention_of(const Model& model) {
  if (model.bundle.family != "attention") {
    throw ConfigError("kind " + model.kind.base + " needs attention weights, " +
                      "bundle holds " + model.bundle.family);
  }
  return std::get<AttentionWeights>(model.bundle.weights);
}

DsfFactored build_system(const Model& model) {
  const Kind& kind = model.kind;
  if (kind.base == "linear") {
    return linear_attention_to_dsf(model.input, attention_of(model));
  }
  if (kind.base == "normalized-exp") {
    return normalized_attention_to_dsf(model.input, attention_of(model), EtaKind::Exp);
  }
  if (kind.base == "normalized-softplus") {
    return normalized_attention_to_dsf(model.input, attention_of(model),
                                       EtaKind::Softplus);
  }
  if (kind.base == "normalized-sigmoid") {
    return normalized_attention_to_dsf(model.input, attention_of(model),
                                       EtaKind::Sigmoid);
  }
  if (kind.base == "taylor") {
    return taylor_softmax_to_dsf(model.input, attention_of(model), kind.number);
  }
  if (kind.base == "multihead") {
    const AttentionWeights& w = attention_of(model);
    if (w.heads != kind.number) {
      throw ConfigError("multihead suffix does not match bundle head count");
    }
    return multihead_linear_to_dsf(model.input, w);
  }
  if (kind.base == "s6" || kind.base == "s6-revsig") {
    if (model.bundle.family != "s6") {
      throw ConfigError("kind " + kind.base + " needs s6 weights");
    }
    const auto& w = std::get<S6Weights>(model.bundle.weights);
    return kind.base == "s6" ? s6_to_dsf(model.input, w)
                             : s6_to_dsf_rev_sigmoid(model.input, w);
  }
  if (kind.base == "qlstm") {
    if (model.bundle.family != "qlstm") {
      throw ConfigError("kind qlstm needs qlstm weights");
    }
    return qlstm_to_dsf(model.input, std::get<QlstmWeights>(model.bundle.weights));
  }
  if (model.bundle.family != "rglru") {
    throw ConfigError("kind rglru needs rglru weights");
  }
  return rglru_to_dsf(model.input, std::get<RgLruWeights>(model.bundle.weights));
}

// The quadratic or stepwise reference for a kind.
Sequence run_oracle(const Model& model) {
  const Kind& kind = model.kind;
  if (kind.base == "linear") {
    return linear_attention_ref(model.input, attention_of(model));
  }
  if (kind.base == "normalized-exp") {
    return normalized_attention_ref(model.input, attention_of(model), EtaKind::Exp);
  }
  if (kind.base == "normalized-softplus") {
    return normalized_attention_ref(model.input, attention_of(model),
                                    EtaKind::Softplus);
  }
  if (kind.base == "normalized-sigmoid") {
    return normalized_attention_ref(model.input, attention_of(model),
                                    EtaKind::Sigmoid);
  }
  if (kind.base == "taylor") {
    // The Taylor rewrite approximates the softmax oracle.
    return softmax_attention_ref(model.input, attention_of(model));
  }
  if (kind.base == "multihead") {
    return multihead_linear_ref(model.input, attention_of(model));
  }
  if (kind.base == "s6" || kind.base == "s6-revsig") {
    return s6_ref(model.input, std::get<S6Weights>(model.bundle.weights));
  }
  if (kind.base == "qlstm") {
    return qlstm_ref(model.input, std::get<QlstmWeights>(model.bundle.weights));
  }
  return rglru_ref(model.input, std::get<RgLruWeights>(model.bundle.weights));
}

Sequence run_engine(const DsfFactored& sys, const Sequence& u,
                    const std::string& engine, std::size_t kernel_cap,
                    std::size_t threads) {
  if (engine == "seq") return run_sequential(sys, u);
  if (engine == "scan") return run_scan(sys, u, ScanOptions{threads});
  if (engine == "kernel") {
    const KernelMatrix kernel = materialize_kernel(densify(sys), kernel_cap);
    return apply_kernel(kernel, u);
  }
  throw ConfigError("unknown engine: " + engine);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << text;
  if (!text.empty() && text.back() != '\n') out << '\n';
  if (!out) throw IoError("write failed: " + path);
}

// Print to stdout, or write to a file when --out was given.
void emit(const std::string& out_path, const std::string& text) {
  if (out_path.empty()) {
    std::cout << text << "\n";
  } else {
    write_text(out_path, text);
  }
}

std::vector<std::size_t> parse_size_list(const std::string& text,
                                         const char* what) {
  std::vector<std::size_t> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      values.push_back(std::stoul(item));
    } catch (const std::exception&) {
      throw ConfigError(std::string("bad ") + what + " list entry: " + item);
    }
  }
  if (values.empty()) throw ConfigError(std::string("empty ") + what + " list");
  return values;
}

// ---------------------------------------------------------------------------
// Subcommands.
// ---------------------------------------------------------------------------

int cmd_run(const ModelArgs& margs, const std::string& engine,
            const std::string& out_path, std::size_t kernel_cap,
            std::size_t threads, const std::string& save_weights,
            const std::string& save_input) {
  const Model model = assemble_model(margs);
  if (!save_weights.empty()) save_bundle(save_weights, model.bundle);
  if (!save_input.empty()) save_sequence(save_input, "input", model.input);

  const DsfFactored sys = build_system(model);
  const auto t0 = std::chrono::steady_clock::now();
  const Sequence y = run_engine(sys, model.input, engine, kernel_cap, threads);
  const auto t1 = std::chrono::steady_clock::now();

  if (!out_path.empty()) save_sequence(out_path, "output", y);

  EngineReport report;
  report.engine = engine;
  report.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
  report.threads = engine == "scan" ? threads : 1;
  std::cout << report.to_json() << "\n";
  return 0;
}

int cmd_compare(const ModelArgs& margs, const std::string& engine,
                const std::string& against, double tol,
                const std::string& file_a, const std::string& file_b,
                std::size_t kernel_cap, std::size_t threads,
                const std::string& out_path) {
  DiffReport report;
  if (!file_a.empty() || !file_b.empty()) {
    if (file_a.empty() || file_b.empty()) {
      throw ConfigError("file mode needs both --a and --b");
    }
    report = compare(load_sequence(file_a), load_sequence(file_b), tol);
  } else {
    const Model model = assemble_model(margs);
    const DsfFactored sys = build_system(model);
    const Sequence left =
        run_engine(sys, model.input, engine, kernel_cap, threads);
    const Sequence right =
        against == "oracle"
            ? run_oracle(model)
            : run_engine(sys, model.input, against, kernel_cap, threads);
    report = compare(left, right, tol);
  }
  emit(out_path, report.to_json());
  return report.pass ? 0 : 1;
}

int cmd_taylor_study(const ModelArgs& margs, const std::string& orders_text,
                     double score_cap, bool csv, const std::string& out_path) {
  const ModelArgs adjusted = margs;
  Model model;
  {
    ModelArgs plain = adjusted;
    plain.kind_text = "linear";  // weights only; the study picks its own maps
    model = assemble_model(plain);
  }
  const std::vector<std::size_t> orders = parse_size_list(orders_text, "orders");
  const ConvergenceTable table = taylor_convergence_study(
      model.input, attention_of(model), orders, score_cap);
  emit(out_path, csv ? table.to_csv() : table.to_json());
  return 0;
}

int cmd_spectrum(const ModelArgs& margs, bool csv, const std::string& out_path) {
  const Model model = assemble_model(margs);
  const DsfFactored sys = build_system(model);
  const SpectralProfile profile = spectral_profile(sys);
  emit(out_path, csv ? profile.to_csv() : profile.to_json());
  return 0;
}

// Cumulative-sum fixture: one state, one channel, lambda = B = C = 1, so
// y_i = sum_{j<=i} u_j.
DsfDense cumsum_fixture(std::size_t steps) {
  DsfDense sys;
  sys.steps = steps;
  sys.state_dim = 1;
  sys.channels = 1;
  sys.lambda.assign(steps, 1.0);
  sys.input.assign(steps, 1.0);
  sys.output.assign(steps, 1.0);
  return sys;
}

int cmd_embed(std::size_t nbar, bool seeded_fill, std::uint64_t seed,
              const std::string& input_path, std::size_t length, double tol,
              const std::string& out_path) {
  Sequence u = input_path.empty()
                   ? Sequence(length, 1,
                              [&] {
                                std::vector<double> v(length);
                                for (std::size_t i = 0; i < length; ++i) {
                                  v[i] = static_cast<double>(i + 1);
                                }
                                return v;
                              }())
                   : load_sequence(input_path);
  if (u.channels != 1) {
    throw ConfigError("the embedding fixture is single-channel");
  }
  const DsfDense sys = cumsum_fixture(u.length);
  const DsfDense padded = embed_system(sys, EmbedOptions{nbar, seeded_fill, seed});
  const Sequence y0 = run_sequential(sys, u);
  const Sequence y1 = run_sequential(padded, u);
  const DiffReport report = compare(y0, y1, tol);
  emit(out_path, report.to_json());
  return report.pass ? 0 : 1;
}

int cmd_mqar(std::size_t vocab, std::size_t pairs, std::size_t length,
             std::uint64_t seed, const std::string& out_path) {
  const MqarSample sample = mqar_generate(MqarSpec{vocab, pairs, length, seed});
  emit(out_path, sample.to_json());
  return 0;
}

int cmd_bench(const std::string& kinds_text, const std::string& lengths_text,
              std::size_t channels, std::size_t expansion, std::size_t repeats,
              std::uint64_t seed, bool csv, const std::string& out_path) {
  BenchSpec spec;
  spec.kinds.clear();
  {
    std::stringstream ss(kinds_text);
    std::string item;
    while (std::getline(ss, item, ',')) spec.kinds.push_back(item);
  }
  spec.lengths = parse_size_list(lengths_text, "lengths");
  spec.channels = channels;
  spec.expansion = expansion;
  spec.repeats = repeats;
  spec.seed = seed;
  const ScalingReport report = bench_scaling(spec);
  emit(out_path, csv ? report.to_csv() : report.to_json());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"diagonal linear recurrence toolkit"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "convert a model and run an engine");
  ModelArgs run_margs;
  add_model_flags(run, &run_margs);
  std::string run_engine_name = "seq";
  std::string run_out, run_save_weights, run_save_input;
  std::size_t run_kernel_cap = kDefaultKernelCap;
  std::size_t run_threads = 1;
  run->add_option("--engine", run_engine_name, "seq, scan or kernel");
  run->add_option("--out", run_out, "write the output sequence here (.dsft)");
  run->add_option("--kernel-cap", run_kernel_cap,
                  "max length the kernel engine will materialize");
  run->add_option("--threads", run_threads, "scan worker threads");
  run->add_option("--save-weights", run_save_weights,
                  "also save the weights bundle to this directory");
  run->add_option("--save-input", run_save_input,
                  "also save the input sequence here (.dsft)");

  // compare
  auto* cmp = app.add_subcommand("compare",
                                 "run two routes and difference the outputs");
  ModelArgs cmp_margs;
  add_model_flags(cmp, &cmp_margs);
  std::string cmp_engine = "seq", cmp_against = "oracle";
  std::string cmp_a, cmp_b, cmp_out;
  double cmp_tol = 1e-9;
  std::size_t cmp_kernel_cap = kDefaultKernelCap;
  std::size_t cmp_threads = 1;
  cmp->add_option("--engine", cmp_engine, "left side: seq, scan or kernel");
  cmp->add_option("--against", cmp_against,
                  "right side: oracle, seq, scan or kernel");
  cmp->add_option("--tol", cmp_tol, "max-abs tolerance");
  cmp->add_option("--a", cmp_a, "file mode: first sequence (.dsft)");
  cmp->add_option("--b", cmp_b, "file mode: second sequence (.dsft)");
  cmp->add_option("--kernel-cap", cmp_kernel_cap,
                  "max length the kernel engine will materialize");
  cmp->add_option("--threads", cmp_threads, "scan worker threads");
  cmp->add_option("--out", cmp_out, "write the report here instead of stdout");

  // taylor-study
  auto* study = app.add_subcommand(
      "taylor-study", "truncated softmax features vs the exact oracle");
  ModelArgs study_margs;
  add_model_flags(study, &study_margs);
  std::string study_orders = "1,2,3,4,5,6";
  double study_cap = 1.0;
  bool study_csv = false;
  std::string study_out;
  study->add_option("--orders", study_orders, "comma-separated feature orders");
  study->add_option("--score-cap", study_cap,
                    "rescale queries until max |q^T k| is at most this");
  study->add_flag("--csv", study_csv, "emit CSV instead of JSON");
  study->add_option("--out", study_out, "write the table here instead of stdout");

  // spectrum
  auto* spec = app.add_subcommand("spectrum",
                                  "per-step transition magnitude profile");
  ModelArgs spec_margs;
  add_model_flags(spec, &spec_margs);
  bool spec_csv = false;
  std::string spec_out;
  spec->add_flag("--csv", spec_csv, "emit CSV instead of JSON");
  spec->add_option("--out", spec_out, "write the profile here instead of stdout");

  // embed
  auto* embed = app.add_subcommand(
      "embed", "pad the cumulative-sum fixture and check outputs match");
  std::size_t embed_nbar = 3, embed_len = 3;
  bool embed_seeded = false;
  std::uint64_t embed_seed = 0;
  std::string embed_input, embed_out;
  double embed_tol = 0.0;
  embed->add_option("--nbar", embed_nbar, "padded state dimension");
  embed->add_flag("--seeded-fill", embed_seeded,
                  "fill the padding with seeded noise instead of zeros");
  embed->add_option("--seed", embed_seed, "seed for --seeded-fill");
  embed->add_option("--input", embed_input, "single-channel input (.dsft)");
  embed->add_option("--L", embed_len, "length of the default 1,2,3,... input");
  embed->add_option("--tol", embed_tol, "max-abs tolerance");
  embed->add_option("--out", embed_out, "write the report here instead of stdout");

  // mqar
  auto* mqar = app.add_subcommand("mqar",
                                  "generate an associative-recall sequence");
  std::size_t mqar_v = 8, mqar_k = 1, mqar_l = 4;
  std::uint64_t mqar_seed = 0;
  std::string mqar_out;
  mqar->add_option("--V", mqar_v, "vocabulary size (even)");
  mqar->add_option("--K", mqar_k, "key/value pairs");
  mqar->add_option("--L", mqar_l, "sequence length");
  mqar->add_option("--seed", mqar_seed, "RNG seed");
  mqar->add_option("--out", mqar_out, "write the sample here instead of stdout");

  // bench
  auto* bench = app.add_subcommand("bench", "length-scaling benchmark");
  std::string bench_kinds = "softmax,linear";
  std::string bench_lengths = "1024,2048,4096,8192";
  std::size_t bench_d = 32, bench_n = 16, bench_repeats = 3;
  std::uint64_t bench_seed = 0;
  bool bench_csv = false;
  std::string bench_out;
  bench->add_option("--kinds", bench_kinds,
                    "comma-separated: softmax, linear, qlstm");
  bench->add_option("--Ls", bench_lengths, "comma-separated lengths");
  bench->add_option("--d", bench_d, "channels");
  bench->add_option("--n", bench_n, "state expansion / projection width");
  bench->add_option("--repeats", bench_repeats, "timing repeats per point");
  bench->add_option("--seed", bench_seed, "RNG seed");
  bench->add_flag("--csv", bench_csv, "emit CSV instead of JSON");
  bench->add_option("--out", bench_out, "write the report here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    print_error("Usage", e.what());
    return 2;
  }

  try {
    if (run->parsed()) {
      return cmd_run(run_margs, run_engine_name, run_out, run_kernel_cap,
                     run_threads, run_save_weights, run_save_input);
    }
    if (cmp->parsed()) {
      return cmd_compare(cmp_margs, cmp_engine, cmp_against, cmp_tol, cmp_a,
                         cmp_b, cmp_kernel_cap, cmp_threads, cmp_out);
    }
    if (study->parsed()) {
      return cmd_taylor_study(study_margs, study_orders, study_cap, study_csv,
                              study_out);
    }
    if (spec->parsed()) return cmd_spectrum(spec_margs, spec_csv, spec_out);
    if (embed->parsed()) {
      return cmd_embed(embed_nbar, embed_seeded, embed_seed, embed_input,
                       embed_len, embed_tol, embed_out);
    }
    if (mqar->parsed()) {
      return cmd_mqar(mqar_v, mqar_k, mqar_l, mqar_seed, mqar_out);
    }
    if (bench->parsed()) {
      return cmd_bench(bench_kinds, bench_lengths, bench_d, bench_n,
                       bench_repeats, bench_seed, bench_csv, bench_out);
    }
  } catch (const UnknownKindError& e) {
    print_error("UnknownKind", e.what());
    return 2;
  } catch (const DsfError& e) {
    print_error(e.name(), e.what());
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    print_error("Internal", e.what());
    return 2;
  }
  print_error("Usage", "no subcommand given");
  return 2;
}
