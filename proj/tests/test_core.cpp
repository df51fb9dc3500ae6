// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "dsf/core.hpp"

using namespace dsf;

TEST_CASE("sequence constructors validate their arguments") {
  CHECK_NOTHROW(Sequence(0, 3));
  CHECK_NOTHROW(Sequence(2, 2, {1.0, 2.0, 3.0, 4.0}));
  CHECK_THROWS_AS(Sequence(2, 0), DimensionError);
  CHECK_THROWS_AS(Sequence(2, 2, {1.0, 2.0, 3.0}), DimensionError);
  CHECK_THROWS_AS(Sequence(1, 2, {1.0, std::nan("")}), NonFiniteError);
  CHECK_THROWS_AS(
      Sequence(1, 1, {std::numeric_limits<double>::infinity()}),
      NonFiniteError);
}

TEST_CASE("sequence rows are row-major") {
  Sequence u(2, 3, {1, 2, 3, 4, 5, 6});
  CHECK(u.at(0, 2) == 3.0);
  CHECK(u.at(1, 0) == 4.0);
  CHECK(u.row(1)[2] == 6.0);
  u.at(1, 1) = -1.0;
  CHECK(u.data[4] == -1.0);
}

TEST_CASE("error names and codes line up") {
  CHECK(DimensionError("x").code() == ErrorCode::Dimension);
  CHECK(std::string(DimensionError("x").name()) == "DimensionError");
  CHECK(std::string(CapExceededError("x").name()) == "CapExceededError");
  CHECK(std::string(NormalizationError("x").name()) == "NormalizationError");
  CHECK(std::string(ConfigError("x").name()) == "ConfigError");
  CHECK(std::string(IoError("x").name()) == "IoError");
  CHECK(std::string(FormatError("x").name()) == "FormatError");
  CHECK(std::string(PreconditionError("x").name()) == "PreconditionError");
  CHECK(std::string(NonFiniteError("x").name()) == "NonFiniteError");
  // They all funnel through the shared base.
  CHECK_THROWS_AS(throw NormalizationError("x"), DsfError);
}

namespace {

DsfDense tiny_dense() {
  DsfDense sys;
  sys.steps = 2;
  sys.state_dim = 2;
  sys.channels = 1;
  sys.lambda = {0.5, 0.5, 0.5, 0.5};
  sys.input = {1, 1, 1, 1};
  sys.output = {1, 1, 1, 1};
  return sys;
}

}  // namespace

TEST_CASE("dense validation catches shape mistakes") {
  CHECK_NOTHROW(validate(tiny_dense()));

  DsfDense bad = tiny_dense();
  bad.lambda.pop_back();
  CHECK_THROWS_AS(validate(bad), DimensionError);

  bad = tiny_dense();
  bad.skip = {1.0};  // needs L * d = 2
  CHECK_THROWS_AS(validate(bad), DimensionError);

  bad = tiny_dense();
  bad.h_init = {1.0};  // needs N = 2
  CHECK_THROWS_AS(validate(bad), DimensionError);

  bad = tiny_dense();
  bad.input[0] = std::nan("");
  CHECK_THROWS_AS(validate(bad), NonFiniteError);
}

namespace {

DsfFactored scalar_factored(double lambda, double scale, double psi,
                            double phi, double wv) {
  DsfFactored sys;
  sys.steps = 1;
  sys.expansion = 1;
  sys.channels = 1;
  sys.groups = 1;
  sys.lambda = {lambda};
  sys.in_scale = {scale};
  sys.psi = {psi};
  sys.phi = {phi};
  if (wv != 0.0) sys.value_map = {wv};
  return sys;
}

}  // namespace

TEST_CASE("densify, scalar hand case") {
  // scale 1, psi [2], W_V [3], phi [5] gives B = [6] and C = [5].
  const DsfDense dense = densify(scalar_factored(0.9, 1.0, 2.0, 5.0, 3.0));
  CHECK(dense.state_dim == 1);
  CHECK(dense.input == std::vector<double>{6.0});
  CHECK(dense.output == std::vector<double>{5.0});
  CHECK(dense.lambda == std::vector<double>{0.9});
}

TEST_CASE("densify without a value map injects only the own channel") {
  DsfFactored sys;
  sys.steps = 1;
  sys.expansion = 2;
  sys.channels = 2;
  sys.groups = 1;
  sys.lambda = {1, 1, 1, 1};
  sys.in_scale = {10.0, 100.0};
  sys.psi = {2.0, 3.0};
  sys.phi = {5.0, 7.0};
  const DsfDense dense = densify(sys);
  // State row c*n + r injects scale[c] * psi[r] from channel c alone.
  // N = 4, d = 2; B is 4 x 2 row-major.
  CHECK(dense.input == std::vector<double>{20, 0, 30, 0, 0, 200, 0, 300});
  // C is 2 x 4: channel c reads phi over its own block.
  CHECK(dense.output == std::vector<double>{5, 7, 0, 0, 0, 0, 5, 7});
}

TEST_CASE("densify respects factor groups") {
  DsfFactored sys;
  sys.steps = 1;
  sys.expansion = 1;
  sys.channels = 2;
  sys.groups = 2;  // one factor pair per channel
  sys.lambda = {1, 1};
  sys.in_scale = {1.0, 1.0};
  sys.psi = {2.0, 3.0};
  sys.phi = {5.0, 7.0};
  CHECK(sys.group_of(0) == 0);
  CHECK(sys.group_of(1) == 1);
  const DsfDense dense = densify(sys);
  CHECK(dense.input == std::vector<double>{2, 0, 0, 3});
  CHECK(dense.output == std::vector<double>{5, 0, 0, 7});
}

TEST_CASE("factored validation catches group mismatches") {
  DsfFactored sys = scalar_factored(1.0, 1.0, 1.0, 1.0, 0.0);
  CHECK_NOTHROW(validate(sys));
  sys.channels = 3;  // groups = 1 divides 3, but the arrays no longer fit
  CHECK_THROWS_AS(validate(sys), DimensionError);

  DsfFactored bad;
  bad.steps = 1;
  bad.expansion = 1;
  bad.channels = 4;
  bad.groups = 3;  // does not divide 4
  bad.lambda.assign(4, 1.0);
  bad.in_scale.assign(4, 1.0);
  bad.psi.assign(3, 1.0);
  bad.phi.assign(3, 1.0);
  CHECK_THROWS_AS(validate(bad), DimensionError);
}

TEST_CASE("kernel matrix packs the lower triangle") {
  KernelMatrix kernel;
  kernel.steps = 3;
  kernel.channels = 1;
  kernel.blocks = {10, 20, 30, 40, 50, 60};  // rows: [10], [20 30], [40 50 60]
  CHECK(kernel.block_offset(0, 0) == 0);
  CHECK(kernel.block_offset(1, 0) == 1);
  CHECK(kernel.block_offset(2, 2) == 5);
  CHECK(kernel.entry(2, 1, 0, 0) == 50.0);
  CHECK(kernel.entry(0, 0, 0, 0) == 10.0);
  // Above the diagonal reads exactly zero.
  CHECK(kernel.entry(0, 2, 0, 0) == 0.0);
  CHECK(kernel.entry(1, 2, 0, 0) == 0.0);
}

TEST_CASE("sequence digest is stable and collision-averse") {
  const Sequence u(2, 2, {1, 2, 3, 4});
  const Sequence v(2, 2, {1, 2, 3, 5});
  const Sequence w(4, 1, {1, 2, 3, 4});  // same bytes, different shape
  CHECK(sequence_digest(u) == sequence_digest(u));
  CHECK(sequence_digest(u) != 0);  // zero means "not bound"
  CHECK(sequence_digest(u) != sequence_digest(v));
  CHECK(sequence_digest(u) != sequence_digest(w));
}
