// SPDX-License-Identifier: Apache-2.0
//
// End-to-end tests for the dsf binary. The test runner exports DSF_CLI_PATH;
// commands run through popen and report exit status plus captured stdout.

#include <doctest.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>
#include <vector>

#include <json.hpp>

#include "dsf/tensor_io.hpp"

namespace fs = std::filesystem;

namespace {

struct CliResult {
  int exit_code = -1;
  std::string out;
};

const char* cli_path() {
  const char* path = std::getenv("DSF_CLI_PATH");
  REQUIRE_MESSAGE(path != nullptr, "DSF_CLI_PATH must point at the dsf binary");
  return path;
}

CliResult run_cli(const std::string& args) {
  const std::string command = std::string(cli_path()) + " " + args + " 2>&1";
  FILE* pipe = popen(command.c_str(), "r");
  REQUIRE(pipe != nullptr);
  CliResult result;
  std::array<char, 4096> buffer;
  std::size_t got;
  while ((got = fread(buffer.data(), 1, buffer.size(), pipe)) > 0) {
    result.out.append(buffer.data(), got);
  }
  const int status = pclose(pipe);
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return result;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("dsf_cli_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  static int& counter() {
    static int n = 0;
    return n;
  }
};

}  // namespace

TEST_CASE("cli: run emits an engine report and an output file") {
  TempDir dir;
  const std::string out = (dir.path / "y.dsft").string();
  const CliResult r = run_cli(
      "run --kind linear --engine seq --seed 0 --L 12 --d 3 --m 2 --out " + out);
  CAPTURE(r.out);
  CHECK(r.exit_code == 0);
  const auto report = nlohmann::json::parse(r.out);
  CHECK(report["engine"] == "seq");
  CHECK(report["wall_seconds"].is_number());

  const dsf::Sequence y = dsf::load_sequence(out);
  CHECK(y.length == 12);
  CHECK(y.channels == 3);
}

TEST_CASE("cli: packaged test vectors drive a run end to end") {
  const char* fixtures = std::getenv("DSF_FIXTURES_PATH");
  REQUIRE_MESSAGE(fixtures != nullptr,
                  "DSF_FIXTURES_PATH must point at the fixtures directory");
  const fs::path root(fixtures);
  const std::string weights = (root / "attention_linear").string();
  const std::string input = (root / "input_l16_d4.dsft").string();

  const CliResult run = run_cli("run --kind linear --engine seq --weights " +
                                weights + " --input " + input);
  CAPTURE(run.out);
  CHECK(run.exit_code == 0);

  const CliResult cmp = run_cli(
      "compare --kind linear --engine scan --against seq --tol 1e-9 --weights " +
      weights + " --input " + input);
  CAPTURE(cmp.out);
  CHECK(cmp.exit_code == 0);
}

TEST_CASE("cli: every engine and kind runs on generated data") {
  for (const char* kind : {"linear", "normalized-softplus", "taylor:2", "s6",
                           "s6-revsig", "qlstm", "rglru", "multihead:2"}) {
    for (const char* engine : {"seq", "scan", "kernel"}) {
      const CliResult r = run_cli(std::string("run --kind ") + kind +
                                  " --engine " + engine +
                                  " --seed 3 --L 10 --d 4 --m 4");
      CAPTURE(kind);
      CAPTURE(engine);
      CAPTURE(r.out);
      CHECK(r.exit_code == 0);
    }
  }
}

TEST_CASE("cli: unknown kind exits 2 with machine-readable JSON") {
  const CliResult r = run_cli("run --kind warp-drive");
  CHECK(r.exit_code == 2);
  const auto err = nlohmann::json::parse(r.out);
  CHECK(err["error"] == "UnknownKind");
  CHECK(err.contains("message"));
}

TEST_CASE("cli: the kernel engine refuses absurd lengths by default") {
  const CliResult r =
      run_cli("run --kind linear --engine kernel --L 10000 --d 2 --m 2");
  CHECK(r.exit_code == 3);
  const auto err = nlohmann::json::parse(r.out);
  CHECK(err["error"] == "CapExceededError");

  // Raising the cap explicitly makes the same run legal.
  const CliResult ok = run_cli(
      "run --kind linear --engine kernel --L 600 --d 2 --m 2 --kernel-cap 600");
  CAPTURE(ok.out);
  CHECK(ok.exit_code == 0);
}

TEST_CASE("cli: compare against the oracle passes at 1e-9") {
  for (const char* kind : {"linear", "s6", "qlstm", "rglru"}) {
    const CliResult r = run_cli(std::string("compare --kind ") + kind +
                                " --against oracle --tol 1e-9 --seed 0 " +
                                "--L 16 --d 4 --m 3");
    CAPTURE(kind);
    CAPTURE(r.out);
    CHECK(r.exit_code == 0);
    const auto report = nlohmann::json::parse(r.out);
    CHECK(report["pass"] == true);
  }
}

TEST_CASE("cli: scan and sequential differ at zero tolerance") {
  // The scan reassociates the products, so bit-equality must fail...
  const CliResult strict = run_cli(
      "compare --kind linear --engine scan --against seq --tol 0 "
      "--seed 0 --L 64 --d 4 --m 4");
  CHECK(strict.exit_code == 1);
  const auto report = nlohmann::json::parse(strict.out);
  CHECK(report["pass"] == false);
  CHECK(report["max_abs"].get<double>() > 0.0);

  // ...while any honest tolerance passes.
  const CliResult loose = run_cli(
      "compare --kind linear --engine scan --against seq --tol 1e-10 "
      "--seed 0 --L 64 --d 4 --m 4");
  CHECK(loose.exit_code == 0);
}

TEST_CASE("cli: file-mode compare and its dimension failure") {
  TempDir dir;
  const std::string a = (dir.path / "a.dsft").string();
  const std::string b = (dir.path / "b.dsft").string();
  dsf::save_sequence(a, "a", dsf::Sequence(2, 2, {1, 2, 3, 4}));
  dsf::save_sequence(b, "b", dsf::Sequence(2, 2, {1, 2, 3, 4.5}));
  CliResult r = run_cli("compare --a " + a + " --b " + b + " --tol 1");
  CHECK(r.exit_code == 0);
  r = run_cli("compare --a " + a + " --b " + b + " --tol 0.1");
  CHECK(r.exit_code == 1);

  const std::string c = (dir.path / "c.dsft").string();
  dsf::save_sequence(c, "c", dsf::Sequence(1, 2, {1, 2}));
  r = run_cli("compare --a " + a + " --b " + c + " --tol 1");
  CHECK(r.exit_code == 4);
  CHECK(nlohmann::json::parse(r.out)["error"] == "DimensionError");
}

TEST_CASE("cli: missing files exit 6") {
  const CliResult r = run_cli("run --kind linear --input /nonexistent.dsft");
  CHECK(r.exit_code == 6);
  const auto err = nlohmann::json::parse(r.out);
  CHECK(err["error"] == "IoError");
}

TEST_CASE("cli: saved weight bundles feed later runs") {
  TempDir dir;
  const std::string bundle = (dir.path / "weights").string();
  const std::string input = (dir.path / "u.dsft").string();
  const std::string y1 = (dir.path / "y1.dsft").string();
  const std::string y2 = (dir.path / "y2.dsft").string();

  CliResult r = run_cli(
      "run --kind qlstm --engine seq --seed 5 --L 10 --d 3 --save-weights " +
      bundle + " --save-input " + input + " --out " + y1);
  CAPTURE(r.out);
  CHECK(r.exit_code == 0);

  // Re-running from the files must reproduce the output bit for bit.
  r = run_cli("run --kind qlstm --engine seq --weights " + bundle +
              " --input " + input + " --out " + y2);
  CAPTURE(r.out);
  CHECK(r.exit_code == 0);
  r = run_cli("compare --a " + y1 + " --b " + y2 + " --tol 0");
  CHECK(r.exit_code == 0);
}

TEST_CASE("cli: mqar matches the frozen fixture and is deterministic") {
  const CliResult r = run_cli("mqar --V 8 --K 1 --L 4 --seed 0");
  CHECK(r.exit_code == 0);
  CHECK(r.out ==
        "{\"tokens\":[3,4,8,3],\"query_positions\":[3],\"targets\":[4]}\n");
  const CliResult again = run_cli("mqar --V 8 --K 1 --L 4 --seed 0");
  CHECK(again.out == r.out);

  const CliResult bad = run_cli("mqar --V 7 --K 1 --L 4");
  CHECK(bad.exit_code == 2);
  CHECK(nlohmann::json::parse(bad.out)["error"] == "ConfigError");
}

TEST_CASE("cli: embed reports equal outputs, padded or not") {
  CliResult r = run_cli("embed --nbar 3");
  CHECK(r.exit_code == 0);
  const auto report = nlohmann::json::parse(r.out);
  CHECK(report["pass"] == true);
  CHECK(report["max_abs"].get<double>() == 0.0);

  r = run_cli("embed --nbar 5 --L 7 --seeded-fill --seed 9");
  CHECK(r.exit_code == 0);
  CHECK(nlohmann::json::parse(r.out)["pass"] == true);
}

TEST_CASE("cli: taylor study emits a decreasing error column") {
  const CliResult r =
      run_cli("taylor-study --orders 2,4,8 --seed 0 --L 8 --d 4 --m 4 --csv");
  CAPTURE(r.out);
  CHECK(r.exit_code == 0);
  // Parse the CSV: header then one row per order.
  std::vector<double> errs;
  std::istringstream lines(r.out);
  std::string line;
  std::getline(lines, line);
  CHECK(line == "order,feature_dim,max_abs_err,mean_abs_err");
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    const auto c1 = line.find(','), c2 = line.find(',', c1 + 1);
    const auto c3 = line.find(',', c2 + 1);
    errs.push_back(std::stod(line.substr(c2 + 1, c3 - c2 - 1)));
  }
  REQUIRE(errs.size() == 3);
  CHECK(errs[0] > errs[1]);
  CHECK(errs[1] > errs[2]);
}

TEST_CASE("cli: spectrum stays inside the unit disc for gated kinds") {
  const CliResult r = run_cli("spectrum --kind rglru --seed 1 --L 12 --d 3");
  CHECK(r.exit_code == 0);
  const auto profile = nlohmann::json::parse(r.out);
  for (const auto& v : profile["max_abs"]) {
    CHECK(v.get<double>() <= 1.0 + 1e-15);
  }
}

TEST_CASE("cli: bench smoke test on tiny lengths") {
  const CliResult r = run_cli(
      "bench --kinds linear --Ls 8,16 --d 3 --n 2 --repeats 1 --csv");
  CAPTURE(r.out);
  CHECK(r.exit_code == 0);
  CHECK(r.out.rfind("kind,length,seconds,bytes_estimate\n", 0) == 0);

  const CliResult bad = run_cli("bench --kinds linear --Ls 16,8 --repeats 1");
  CHECK(bad.exit_code == 2);
}

TEST_CASE("cli: reports can be written to files") {
  TempDir dir;
  const std::string out = (dir.path / "report.json").string();
  const CliResult r = run_cli(
      "compare --kind linear --against oracle --tol 1e-9 --seed 2 --L 8 "
      "--d 3 --m 2 --out " + out);
  CHECK(r.exit_code == 0);
  std::ifstream in(out);
  REQUIRE(in.good());
  nlohmann::json report;
  in >> report;
  CHECK(report["pass"] == true);
}

TEST_CASE("cli: no subcommand is a usage error") {
  const CliResult r = run_cli("");
  CHECK(r.exit_code == 2);
}
