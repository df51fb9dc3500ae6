// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <vector>

#include "dsf/adapters.hpp"
#include "dsf/analysis.hpp"
#include "dsf/engines.hpp"
#include "dsf/harness.hpp"

using namespace dsf;
using doctest::Approx;

namespace {

// One state, one channel, lambda = B = C = 1: the running sum.
DsfDense cumsum_system(std::size_t steps) {
  DsfDense sys;
  sys.steps = steps;
  sys.state_dim = 1;
  sys.channels = 1;
  sys.lambda.assign(steps, 1.0);
  sys.input.assign(steps, 1.0);
  sys.output.assign(steps, 1.0);
  return sys;
}

}  // namespace

TEST_CASE("embedding the running sum leaves its outputs untouched") {
  const Sequence u(3, 1, {1.0, 2.0, 3.0});
  const DsfDense sys = cumsum_system(3);
  const Sequence y = run_sequential(sys, u);
  CHECK(y.data == std::vector<double>{1.0, 3.0, 6.0});

  for (bool seeded : {false, true}) {
    const DsfDense padded = embed_system(sys, EmbedOptions{3, seeded, 77});
    CHECK(padded.state_dim == 3);
    const Sequence ypad = run_sequential(padded, u);
    CAPTURE(seeded);
    CHECK(ypad.data == y.data);  // exact: the padding never reaches C
  }
}

TEST_CASE("embedding pads the output map with exact zeros") {
  const DsfDense sys = random_dense_system(1, 8, 3, 2);
  const DsfDense padded = embed_system(sys, EmbedOptions{7, true, 5});
  for (std::size_t i = 0; i < 8; ++i) {
    const double* c = padded.output_at(i);
    for (std::size_t row = 0; row < 2; ++row) {
      for (std::size_t col = 3; col < 7; ++col) {
        CHECK(c[row * 7 + col] == 0.0);
      }
      // The original columns are carried over verbatim.
      for (std::size_t col = 0; col < 3; ++col) {
        CHECK(c[row * 7 + col] == sys.output_at(i)[row * 3 + col]);
      }
    }
  }
}

TEST_CASE("embedding preserves outputs on random systems") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const DsfDense sys = random_dense_system(seed, 16, 4, 3, 1.0, seed % 2 == 0);
    const Sequence u = random_sequence(seed + 60, 16, 3);
    const DsfDense padded =
        embed_system(sys, EmbedOptions{4 + seed % 6, true, seed});
    const DiffReport diff =
        compare(run_sequential(sys, u), run_sequential(padded, u), 1e-12);
    CAPTURE(seed);
    CHECK(diff.pass);
  }
}

TEST_CASE("embedding rejects a shrinking target and keeps h_init working") {
  const DsfDense sys = random_dense_system(2, 4, 5, 2);
  CHECK_THROWS_AS(embed_system(sys, EmbedOptions{4, false, 0}),
                  DimensionError);

  DsfDense with_state = sys;
  with_state.h_init = {0.1, 0.2, 0.3, 0.4, 0.5};
  const DsfDense padded = embed_system(with_state, EmbedOptions{8, true, 3});
  REQUIRE(padded.h_init.size() == 8);
  for (std::size_t k = 5; k < 8; ++k) CHECK(padded.h_init[k] == 0.0);
  const Sequence u = random_sequence(70, 4, 2);
  CHECK(compare(run_sequential(with_state, u), run_sequential(padded, u), 1e-12)
            .pass);
}

TEST_CASE("attention kernels telescope") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const AttentionWeights w = random_attention_weights(seed, 3, 2);
    const Sequence u = random_sequence(seed + 80, 12, 3);
    const DsfFactored sys = linear_attention_to_dsf(u, w);
    const TelescopeReport report = telescoping_report(sys, 1e-10);
    CAPTURE(seed);
    CHECK(report.pass);
    CHECK(report.max_residual <= 1e-10);
  }
}

TEST_CASE("telescoping is an attention-only diagnostic") {
  const RgLruWeights w = random_rglru_weights(0, 2);
  const Sequence u = random_sequence(1, 6, 2);
  const DsfFactored sys = rglru_to_dsf(u, w);
  CHECK_THROWS_AS(telescoping_report(sys), PreconditionError);
}

TEST_CASE("scalar kernel fit separates attention from selective SSMs") {
  // Attention: one scalar per step reproduces the whole kernel row.
  const AttentionWeights aw = random_attention_weights(3, 3, 2);
  const Sequence ua = random_sequence(81, 10, 3);
  const ScalarFitReport afit = kernel_scalar_fit(linear_attention_to_dsf(ua, aw));
  CHECK(afit.max_residual <= 1e-10);

  // S6 with input-dependent delta: no scalar can patch the kernel row.
  const S6Weights sw = random_s6_weights(4, 3, 2, 2);
  const Sequence us = random_sequence(82, 10, 3);
  const ScalarFitReport sfit = kernel_scalar_fit(s6_to_dsf(us, sw));
  CHECK(sfit.max_residual > 1e-6);
}

TEST_CASE("scalar kernel fit rejects unrelated system families") {
  const QlstmWeights w = random_qlstm_weights(0, 2);
  const Sequence u = random_sequence(2, 5, 2);
  CHECK_THROWS_AS(kernel_scalar_fit(qlstm_to_dsf(u, w)), PreconditionError);
}

TEST_CASE("spectral profile extrema and running product") {
  DsfDense sys;
  sys.steps = 2;
  sys.state_dim = 2;
  sys.channels = 1;
  sys.lambda = {2.0, -0.5, 3.0, 0.25};
  sys.input.assign(4, 1.0);
  sys.output.assign(4, 1.0);
  const SpectralProfile profile = spectral_profile(sys);
  CHECK(profile.max_abs == std::vector<double>{2.0, 3.0});
  CHECK(profile.min_abs == std::vector<double>{0.5, 0.25});
  CHECK(profile.running_prod == std::vector<double>{2.0, 6.0});
}

TEST_CASE("gated adapters sit inside the unit disc by construction") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Sequence u = random_sequence(seed, 12, 3);
    const SpectralProfile ql =
        spectral_profile(qlstm_to_dsf(u, random_qlstm_weights(seed, 3)));
    const SpectralProfile rg =
        spectral_profile(rglru_to_dsf(u, random_rglru_weights(seed, 3)));
    const SpectralProfile s6 =
        spectral_profile(s6_to_dsf(u, random_s6_weights(seed, 3, 2, 2)));
    for (const SpectralProfile* p : {&ql, &rg, &s6}) {
      for (double v : p->max_abs) CHECK(v <= 1.0 + 1e-15);
      for (double v : p->min_abs) CHECK(v >= 0.0);
    }
  }
}

TEST_CASE("taylor study errors shrink as the order grows") {
  const AttentionWeights w = random_attention_weights(0, 4, 4);
  const Sequence u = random_sequence(1, 8, 4);
  const ConvergenceTable table =
      taylor_convergence_study(u, w, {2, 4, 8}, 1.0);
  REQUIRE(table.rows.size() == 3);
  CHECK(table.rows[0].order == 2);
  CHECK(table.rows[0].feature_dim == 21);
  CHECK(table.rows[1].feature_dim == 341);  // sum_{j<=4} 4^j
  CHECK(table.rows[0].max_abs_err > table.rows[1].max_abs_err);
  CHECK(table.rows[1].max_abs_err > table.rows[2].max_abs_err);
  CHECK(table.rows[2].max_abs_err <= 1e-4);
  CHECK(table.rows[2].mean_abs_err <= table.rows[2].max_abs_err);
}

TEST_CASE("taylor study validates its inputs") {
  const AttentionWeights w = random_attention_weights(0, 4, 4);
  const Sequence u = random_sequence(1, 8, 4);
  CHECK_THROWS_AS(taylor_convergence_study(u, w, {}), ConfigError);
  CHECK_THROWS_AS(taylor_convergence_study(u, w, {4, 2}), ConfigError);
  CHECK_THROWS_AS(taylor_convergence_study(u, w, {2, 4}, 0.0), ConfigError);
  const AttentionWeights multi = random_attention_weights(0, 4, 4, 2);
  CHECK_THROWS_AS(taylor_convergence_study(u, multi, {2, 4}),
                  PreconditionError);
}

TEST_CASE("reports serialize to JSON and CSV") {
  const AttentionWeights w = random_attention_weights(0, 3, 2);
  const Sequence u = random_sequence(1, 6, 3);
  const DsfFactored sys = linear_attention_to_dsf(u, w);

  const std::string tj = telescoping_report(sys).to_json();
  CHECK(tj.find("max_residual") != std::string::npos);
  CHECK(tj.find("\"pass\":true") != std::string::npos);

  const SpectralProfile profile = spectral_profile(sys);
  const std::string pc = profile.to_csv();
  CHECK(pc.rfind("step,", 0) == 0);  // header row first
  CHECK(profile.to_json().find("running_prod") != std::string::npos);

  const ConvergenceTable table = taylor_convergence_study(u, w, {1, 2});
  const std::string cc = table.to_csv();
  CHECK(cc.find("order") != std::string::npos);
  CHECK(table.to_json().find("rows") != std::string::npos);
}
