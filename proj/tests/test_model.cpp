#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "openrdm/error.hpp"
#include "openrdm/model.hpp"
#include "oracles.hpp"

#include <sstream>

using namespace openrdm;

TEST_CASE("partition ranges and region lookup") {
  const Partition p{3, 2, 4};
  CHECK(p.total() == 9);
  CHECK(p.range(Region::D).offset == 3);
  CHECK(p.range(Region::R).end() == 9);
  CHECK(p.region_of(0) == Region::L);
  CHECK(p.region_of(4) == Region::D);
  CHECK(p.region_of(5) == Region::R);
}

TEST_CASE("from_matrix validates shape, coverage and hermiticity") {
  std::mt19937_64 rng(1);
  Mat h = oracle::random_hermitian(6, rng);
  CHECK_NOTHROW(TightBindingSystem::from_matrix(h, {2, 2, 2}));
  CHECK_THROWS_AS(TightBindingSystem::from_matrix(h, {2, 2, 1}), ValidationError);
  CHECK_THROWS_AS(TightBindingSystem::from_matrix(h, {3, 0, 3}), ValidationError);
  Mat bad = h;
  bad(0, 1) += cplx(1e-6, 0.0);
  CHECK_THROWS_AS(TightBindingSystem::from_matrix(bad, {2, 2, 2}), ValidationError);
  Mat nan = h;
  nan(2, 2) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(TightBindingSystem::from_matrix(nan, {2, 2, 2}), ValidationError);
  CHECK_THROWS_AS(TightBindingSystem::from_matrix(Mat::Zero(3, 4), {1, 1, 1}), ValidationError);
}

TEST_CASE("chain builder is tridiagonal and blocks slice correctly") {
  const auto s = build_chain_system(3, 2, 3, -1.0, 0.25);
  const Mat &h = s.h0();
  for (Index i = 0; i < 8; ++i)
    for (Index j = 0; j < 8; ++j) {
      const cplx expect = i == j ? cplx(0.25) : (std::abs(i - j) == 1 ? cplx(-1.0) : cplx(0.0));
      CHECK(h(i, j) == expect);
    }
  CHECK(s.block(Region::L, Region::D).rows() == 3);
  CHECK(s.block(Region::L, Region::D)(2, 0) == cplx(-1.0));
  CHECK(s.block(Region::L, Region::R).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(build_chain_system(0, 2, 3, -1.0, 0.0), ValidationError);
  CHECK_THROWS_AS(build_chain_system(1, 2, 3, 0.0, 0.0), ValidationError);
}

TEST_CASE("with_bond keeps hermiticity and fingerprint tracks content") {
  const auto s = build_chain_system(2, 2, 2, -1.0, 0.0);
  const auto w = s.with_bond(1, 2, cplx(-0.5, 0.1));
  CHECK(w.h0()(2, 1) == std::conj(w.h0()(1, 2)));
  CHECK(s.fingerprint() == build_chain_system(2, 2, 2, -1.0, 0.0).fingerprint());
  CHECK(s.fingerprint() != w.fingerprint());
  CHECK(s.fingerprint().size() == 16);
}

TEST_CASE("bias envelope is zero at t <= 0 and the step has a right limit of one") {
  const auto step = BiasProfile::symmetric(0.5, BiasShape::step);
  CHECK(step.envelope(-1.0) == 0.0);
  CHECK(step.envelope(0.0) == 0.0);
  CHECK(step.envelope(0.0, true) == 1.0);
  CHECK(step.envelope(1e-9) == 1.0);
  const auto ramp = BiasProfile::symmetric(0.5, BiasShape::exponential_ramp, 2.0);
  CHECK(ramp.envelope(0.0, true) == 0.0);
  CHECK(ramp.envelope(2.0) == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-15));
}

TEST_CASE("onsite shift: leads rigid, device linear or flat") {
  const Partition p{2, 3, 2};
  auto b = BiasProfile::symmetric(1.0, BiasShape::step);
  const RVec s = b.onsite_shift(p, 1.0);
  CHECK(s(0) == 0.5);
  CHECK(s(1) == 0.5);
  CHECK(s(6) == -0.5);
  CHECK(s(2) == doctest::Approx(0.25));
  CHECK(s(3) == doctest::Approx(0.0));
  CHECK(s(4) == doctest::Approx(-0.25));
  b.device = DeviceBias::flat;
  CHECK(b.onsite_shift(p, 1.0).segment(2, 3).cwiseAbs().maxCoeff() == 0.0);
  const auto sys = build_chain_system(2, 3, 2, -1.0, 0.0);
  CHECK((apply_bias(sys, b, 0.0) - sys.h0()).norm() == 0.0);
  CHECK(parse_bias_shape("exponential-ramp") == BiasShape::exponential_ramp);
  CHECK_THROWS_AS(parse_bias_shape("square"), ValidationError);
  CHECK_THROWS_AS(parse_device_bias("quadratic"), ValidationError);
}

TEST_CASE("ground state density matrix is an idempotent projector with the right trace") {
  const auto sys = build_chain_system(20, 4, 20, -1.0, 0.0);
  const Mat s = ground_state_density_matrix(sys, 22);
  CHECK(s.trace().real() == doctest::Approx(22.0).epsilon(1e-13));
  CHECK(idempotency_error(s) < 1e-12);
  CHECK(hermiticity_error(s) < 1e-14);
  // Commutes with h0: it is stationary.
  CHECK((sys.h0() * s - s * sys.h0()).norm() < 1e-12);
}

TEST_CASE("degenerate Fermi level is rejected unless fractional filling is allowed") {
  Mat h = Mat::Zero(4, 4);
  h(0, 0) = -1.0;
  h(3, 3) = 1.0; // levels -1, 0, 0, 1
  CHECK_THROWS_AS(ground_state_density_matrix(h, 2), ValidationError);
  FillingOptions o;
  o.fractional = true;
  const Mat s = ground_state_density_matrix(h, 2, o);
  CHECK(s.trace().real() == doctest::Approx(2.0));
  CHECK(s(1, 1).real() + s(2, 2).real() == doctest::Approx(1.0));
  CHECK_THROWS_AS(ground_state_density_matrix(h, 5), ValidationError);
}

TEST_CASE("equilibrium density matrix fills levels below mu") {
  Mat h = Mat::Zero(3, 3);
  h(0, 0) = -1.0;
  h(2, 2) = 2.0;
  const Mat s = equilibrium_density_matrix(h, 0.5);
  CHECK(s.trace().real() == doctest::Approx(2.0));
  const Mat half = equilibrium_density_matrix(h, 0.0);
  CHECK(half.trace().real() == doctest::Approx(1.5));
}

TEST_CASE("partitioned matrix reassembles exactly") {
  std::mt19937_64 rng(7);
  const Mat m = oracle::random_hermitian(9, rng);
  const PartitionedMatrix pm(m, Partition{3, 2, 4});
  CHECK(pm.block(Region::D, Region::R).rows() == 2);
  CHECK(pm.block(Region::D, Region::R).cols() == 4);
  CHECK((pm.assemble() - m).norm() == 0.0);
  CHECK_THROWS_AS(PartitionedMatrix(m, Partition{3, 2, 3}), ValidationError);
}

TEST_CASE("hermitian text format round-trips and rejects malformed input") {
  std::mt19937_64 rng(3);
  const Mat m = oracle::random_hermitian(4, rng);
  std::stringstream ss;
  write_hermitian_text(ss, m);
  const Mat back = read_hermitian_text(ss);
  CHECK((back - m).norm() == 0.0);

  std::stringstream short_file("2\n0 0 1 0\n0 1 0 0\n");
  CHECK_THROWS_AS(read_hermitian_text(short_file), ValidationError);
  std::stringstream dup("1\n0 0 1 0\n");
  CHECK_NOTHROW(read_hermitian_text(dup));
  std::stringstream twice("2\n0 0 1 0\n0 0 1 0\n1 0 0 0\n1 1 0 0\n");
  CHECK_THROWS_AS(read_hermitian_text(twice), ValidationError);
  std::stringstream range("1\n0 1 1 0\n");
  CHECK_THROWS_AS(read_hermitian_text(range), ValidationError);
  std::stringstream nonherm("2\n0 0 0 0\n0 1 1 0\n1 0 2 0\n1 1 0 0\n");
  CHECK_THROWS_AS(read_hermitian_text(nonherm), ValidationError);
}
