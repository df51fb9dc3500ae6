// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <vector>

#include "dsf/core.hpp"
#include "dsf/engines.hpp"
#include "dsf/harness.hpp"

using namespace dsf;

namespace {

// Two equal decaying states, each fed the single input channel, summed on
// output: h_i = 0.5 h_{i-1} + [u_i, u_i], y_i = h_i[0] + h_i[1].
DsfDense half_decay(std::size_t steps) {
  DsfDense sys;
  sys.steps = steps;
  sys.state_dim = 2;
  sys.channels = 1;
  sys.lambda.assign(steps * 2, 0.5);
  sys.input.assign(steps * 2, 1.0);
  sys.output.assign(steps * 2, 1.0);
  return sys;
}

const Sequence kOnes(3, 1, {1.0, 1.0, 1.0});

// Straight-line restatement of the recurrence, kept deliberately separate
// from the library loops.
std::vector<double> unrolled_half_decay(const std::vector<double>& u,
                                        double d_skip, double h0) {
  std::vector<double> y;
  double h = h0;  // both states stay equal by symmetry
  for (double ui : u) {
    h = 0.5 * h + ui;
    y.push_back(2.0 * h + d_skip * ui);
  }
  return y;
}

}  // namespace

TEST_CASE("sequential engine, hand-checked values") {
  const Sequence y = run_sequential(half_decay(3), kOnes);
  CHECK(y.length == 3);
  CHECK(y.channels == 1);
  CHECK(y.at(0, 0) == 2.0);
  CHECK(y.at(1, 0) == 3.0);
  CHECK(y.at(2, 0) == 3.5);
  CHECK(unrolled_half_decay({1, 1, 1}, 0.0, 0.0) ==
        std::vector<double>{2.0, 3.0, 3.5});
}

TEST_CASE("sequential engine applies the skip term") {
  DsfDense sys = half_decay(3);
  sys.skip.assign(3, 2.0);
  const Sequence y = run_sequential(sys, kOnes);
  CHECK(y.at(0, 0) == 4.0);
  CHECK(y.at(1, 0) == 5.0);
  CHECK(y.at(2, 0) == 5.5);
}

TEST_CASE("sequential engine starts from h_init") {
  DsfDense sys = half_decay(3);
  sys.h_init = {1.0, 1.0};
  const Sequence y = run_sequential(sys, kOnes);
  CHECK(y.at(0, 0) == 3.0);
  CHECK(y.at(1, 0) == 3.5);
  CHECK(y.at(2, 0) == 3.75);
}

TEST_CASE("engines reject mismatched inputs") {
  const Sequence wrong_len(2, 1, {1.0, 1.0});
  const Sequence wrong_d(3, 2, {1, 1, 1, 1, 1, 1});
  CHECK_THROWS_AS(run_sequential(half_decay(3), wrong_len), DimensionError);
  CHECK_THROWS_AS(run_sequential(half_decay(3), wrong_d), DimensionError);
  CHECK_THROWS_AS(run_scan(half_decay(3), wrong_len), DimensionError);
}

TEST_CASE("scan equals sequential exactly on one step") {
  // With a single step there is nothing to reassociate, so the two engines
  // must agree bit for bit, h_init included.
  DsfDense sys = half_decay(1);
  sys.h_init = {0.3333333333333333, -0.7};
  const Sequence u(1, 1, {0.1234567890123456});
  const Sequence a = run_sequential(sys, u);
  const Sequence b = run_scan(sys, u);
  CHECK(a.at(0, 0) == b.at(0, 0));
}

TEST_CASE("scan matches sequential within roundoff on random systems") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const DsfDense sys =
        random_dense_system(seed, 64, 8, 3, 1.05, seed % 2 == 1);
    const Sequence u = random_sequence(seed + 1000, 64, 3);
    const Sequence a = run_sequential(sys, u);
    const Sequence b = run_scan(sys, u);
    const DiffReport diff = compare(a, b, 1e-10);
    CAPTURE(seed);
    CHECK(diff.pass);
  }
}

TEST_CASE("scan with h_init matches sequential") {
  DsfDense sys = random_dense_system(5, 32, 6, 2);
  SplitMix64 rng(99);
  sys.h_init.resize(6);
  for (double& v : sys.h_init) v = rng.uniform(-1.0, 1.0);
  const Sequence u = random_sequence(6, 32, 2);
  const DiffReport diff =
      compare(run_sequential(sys, u), run_scan(sys, u), 1e-11);
  CHECK(diff.pass);
}

TEST_CASE("scan output is identical for every thread count") {
  const DsfDense sys = random_dense_system(7, 50, 13, 4);
  const Sequence u = random_sequence(8, 50, 4);
  const Sequence one = run_scan(sys, u, ScanOptions{1});
  for (std::size_t threads : {2, 3, 5, 8}) {
    const Sequence many = run_scan(sys, u, ScanOptions{threads});
    CHECK(many.data == one.data);  // bitwise, not approximate
  }
}

TEST_CASE("kernel blocks carry the unrolled weights") {
  const KernelMatrix kernel = materialize_kernel(half_decay(3));
  CHECK(kernel.steps == 3);
  // Diagonal: C_i B_i = [1 1] [1 1]^T = 2. One step back picks up one decay.
  CHECK(kernel.entry(0, 0, 0, 0) == 2.0);
  CHECK(kernel.entry(1, 1, 0, 0) == 2.0);
  CHECK(kernel.entry(1, 0, 0, 0) == 1.0);
  CHECK(kernel.entry(2, 0, 0, 0) == 0.5);
  CHECK(kernel.entry(2, 1, 0, 0) == 1.0);
}

TEST_CASE("kernel includes the skip on the diagonal only") {
  DsfDense sys = half_decay(2);
  sys.skip.assign(2, 2.0);
  const KernelMatrix kernel = materialize_kernel(sys);
  CHECK(kernel.entry(0, 0, 0, 0) == 4.0);
  CHECK(kernel.entry(1, 1, 0, 0) == 4.0);
  CHECK(kernel.entry(1, 0, 0, 0) == 1.0);
}

TEST_CASE("applying the kernel replays the recurrence") {
  const DsfDense sys = random_dense_system(11, 40, 7, 3, 1.0, true);
  const Sequence u = random_sequence(12, 40, 3);
  const Sequence direct = run_sequential(sys, u);
  const Sequence via_kernel = apply_kernel(materialize_kernel(sys), u);
  CHECK(compare(direct, via_kernel, 1e-10).pass);
}

TEST_CASE("kernel materialization respects the length cap") {
  CHECK_THROWS_AS(materialize_kernel(half_decay(600)), CapExceededError);
  CHECK_NOTHROW(materialize_kernel(half_decay(600), 600));
  CHECK_THROWS_AS(materialize_kernel(half_decay(3), 2), CapExceededError);
}

TEST_CASE("kernel view rejects a nonzero initial state") {
  DsfDense sys = half_decay(3);
  sys.h_init = {1.0, 0.0};
  CHECK_THROWS_AS(materialize_kernel(sys), PreconditionError);
  sys.h_init = {0.0, 0.0};  // exact zeros carry no information; allowed
  CHECK_NOTHROW(materialize_kernel(sys));
}

TEST_CASE("factored fast path agrees with the densified system") {
  // Assemble a factored system by hand (grouped, with value map and skip).
  DsfFactored sys;
  sys.steps = 8;
  sys.expansion = 3;
  sys.channels = 4;
  sys.groups = 2;
  SplitMix64 rng(21);
  auto fill = [&rng](std::vector<double>& v, std::size_t count) {
    v.resize(count);
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
  };
  fill(sys.lambda, 8 * 12);
  fill(sys.in_scale, 8 * 4);
  fill(sys.psi, 8 * 2 * 3);
  fill(sys.phi, 8 * 2 * 3);
  fill(sys.value_map, 16);
  fill(sys.skip, 8 * 4);
  fill(sys.h_init, 12);
  const Sequence u = random_sequence(22, 8, 4);

  const Sequence fast_seq = run_sequential(sys, u);
  const Sequence fast_scan = run_scan(sys, u);
  const Sequence slow = run_sequential(densify(sys), u);
  CHECK(compare(fast_seq, slow, 1e-12).pass);
  CHECK(compare(fast_scan, slow, 1e-11).pass);
}

TEST_CASE("factored systems are pinned to their input sequence") {
  DsfFactored sys;
  sys.steps = 2;
  sys.expansion = 1;
  sys.channels = 1;
  sys.groups = 1;
  sys.lambda = {1.0, 1.0};
  sys.in_scale = {1.0, 1.0};
  sys.psi = {1.0, 1.0};
  sys.phi = {1.0, 1.0};
  const Sequence u(2, 1, {1.0, 2.0});
  const Sequence other(2, 1, {1.0, 2.5});

  sys.input_digest = sequence_digest(u);
  CHECK_NOTHROW(run_sequential(sys, u));
  CHECK_THROWS_AS(run_sequential(sys, other), PreconditionError);
  CHECK_THROWS_AS(run_scan(sys, other), PreconditionError);

  sys.input_digest = 0;  // unbound systems accept any input of the right shape
  CHECK_NOTHROW(run_sequential(sys, other));
}

TEST_CASE("engine report serializes to JSON") {
  EngineReport report;
  report.engine = "scan";
  report.wall_seconds = 0.25;
  report.threads = 4;
  report.max_abs_deviation = 1e-12;
  const std::string json = report.to_json();
  CHECK(json.find("\"engine\":\"scan\"") != std::string::npos);
  CHECK(json.find("\"threads\":4") != std::string::npos);
  CHECK(json.find("max_abs_deviation") != std::string::npos);
}
