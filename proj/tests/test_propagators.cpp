#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "openrdm/error.hpp"
#include "openrdm/full_propagator.hpp"
#include "openrdm/reduced_propagator.hpp"
#include "oracles.hpp"

#include <cmath>

using namespace openrdm;

namespace {

const auto kChain = build_chain_system(6, 3, 6, -1.0, 0.0);

Mat device_block(const Mat &full, const Partition &p) {
  const auto D = p.range(Region::D);
  return full.block(D.offset, D.offset, D.size, D.size);
}

} // namespace

TEST_CASE("rk4 and crank-nicolson follow the exact step-bias evolution") {
  const auto profile = BiasProfile::symmetric(0.4, BiasShape::step);
  const Mat s0 = ground_state_density_matrix(kChain, 7);
  Mat hb = kChain.h0();
  hb.diagonal() += profile.onsite_shift(kChain.partition(), 1.0).cast<cplx>();
  const double T = 2.0;
  const Mat exact = oracle::exact_evolution(hb, s0, T);

  PropagationOptions o;
  o.dt = 0.01;
  o.n_steps = 200;
  o.full_stride = 200;
  const auto rk = propagate_full(kChain, profile, s0, o);
  REQUIRE(rk.full.size() == 2);
  CHECK((rk.full.back() - exact).norm() < 1e-7);
  CHECK((rk.sigma_D.back() - device_block(exact, kChain.partition())).norm() < 1e-7);

  o.integrator = Integrator::crank_nicolson;
  const auto cn = propagate_full(kChain, profile, s0, o);
  const double e1 = (cn.full.back() - exact).norm();
  CHECK(e1 < 1e-3);
  o.dt = 0.005;
  o.n_steps = 400;
  o.full_stride = 400;
  const double e2 = (propagate_full(kChain, profile, s0, o).full.back() - exact).norm();
  CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.05));
}

TEST_CASE("full propagation preserves trace, hermiticity and idempotency") {
  const auto profile = BiasProfile::symmetric(0.5, BiasShape::exponential_ramp, 0.5);
  const Mat s0 = ground_state_density_matrix(kChain, 7);
  PropagationOptions o;
  o.dt = 0.01;
  o.n_steps = 300;
  for (auto integ : {Integrator::rk4, Integrator::crank_nicolson}) {
    o.integrator = integ;
    const auto tr = propagate_full(kChain, profile, s0, o);
    CHECK(tr.diagnostics.initially_idempotent);
    CHECK(tr.diagnostics.max_trace_drift < 1e-12);
    CHECK(tr.diagnostics.max_hermiticity < 1e-12);
    CHECK(tr.diagnostics.max_idempotency < 1e-8);
  }
}

TEST_CASE("device occupation rate equals the summed terminal currents") {
  const auto profile = BiasProfile::symmetric(0.5, BiasShape::step);
  const Mat s0 = ground_state_density_matrix(kChain, 7);
  PropagationOptions o;
  o.dt = 0.002;
  o.n_steps = 1000;
  const auto tr = propagate_full(kChain, profile, s0, o);
  double worst = 0.0;
  for (Index k = 1; k < tr.n_steps(); ++k) {
    const double rate = (tr.block_traces[k + 1][1] - tr.block_traces[k - 1][1]) / (2.0 * o.dt);
    const double J = tr.records[k].J_L + tr.records[k].J_R;
    worst = std::max(worst, std::abs(rate - J));
  }
  CHECK(worst < 1e-5);
  // Leads lose what the device gains.
  for (Index k : {Index(0), tr.n_steps()}) {
    const auto &b = tr.block_traces[k];
    CHECK(b[0] + b[1] + b[2] == doctest::Approx(7.0).epsilon(1e-12));
  }
  CHECK(lead_occupation_sum(tr, Region::L, 0) == doctest::Approx(tr.block_traces[0][0]));
}

TEST_CASE("exact replay reproduces the device block of the full run") {
  const auto profile = BiasProfile::symmetric(0.5, BiasShape::step);
  const Mat s0 = ground_state_density_matrix(kChain, 7);
  PropagationOptions o;
  o.dt = 0.01;
  o.n_steps = 400;
  o.record_replay = true;
  const auto full = propagate_full(kChain, profile, s0, o);
  REQUIRE(full.replay.has_value());
  CHECK(full.replay->Q_L.size() == 400 * 4 + 1);

  ReducedOptions ro;
  ro.dt = o.dt;
  ro.n_steps = o.n_steps;
  const auto table = std::make_shared<const ReplayTable>(*full.replay);
  const auto red = propagate_reduced(device_block(s0, kChain.partition()), kChain, profile,
                                     ExactReplayFunctional{table}, ro);
  CHECK(red.meta.mode == "exact-replay");
  double worst = 0.0, worst_J = 0.0;
  for (std::size_t k = 0; k < red.sigma_D.size(); ++k) {
    worst = std::max(worst, (red.sigma_D[k] - full.sigma_D[k]).cwiseAbs().maxCoeff());
    worst_J = std::max(worst_J, std::abs(red.records[k].J_L - full.records[k].J_L));
  }
  CHECK(worst < 1e-12);
  CHECK(worst_J < 1e-13);
  CHECK(std::isnan(red.block_traces[0][0]));

  ro.n_steps = 200;
  ro.dt = 0.02;
  CHECK_THROWS_AS(propagate_reduced(device_block(s0, kChain.partition()), kChain, profile,
                                    ExactReplayFunctional{table}, ro),
                  ValidationError);
  ro.dt = o.dt;
  ro.n_steps = o.n_steps;
  ro.integrator = Integrator::crank_nicolson;
  CHECK_THROWS_AS(propagate_reduced(device_block(s0, kChain.partition()), kChain, profile,
                                    ExactReplayFunctional{table}, ro),
                  ValidationError);
  o.integrator = Integrator::crank_nicolson;
  CHECK_THROWS_AS(propagate_full(kChain, profile, s0, o), ValidationError);
}

TEST_CASE("isolated reduced run equals a full run without leads") {
  std::mt19937_64 rng(4);
  const Mat h = oracle::random_hermitian(5, rng, 0.5);
  const auto sys = TightBindingSystem::from_matrix(h, {0, 5, 0});
  const Mat s0 = ground_state_density_matrix(sys, 2);
  const BiasProfile none;
  for (auto integ : {Integrator::rk4, Integrator::crank_nicolson}) {
    PropagationOptions o;
    o.dt = 0.01;
    o.n_steps = 150;
    o.integrator = integ;
    ReducedOptions ro;
    ro.dt = o.dt;
    ro.n_steps = o.n_steps;
    ro.integrator = integ;
    const auto full = propagate_full(sys, none, s0, o);
    const auto red = propagate_reduced(s0, sys, none, IsolatedFunctional{}, ro);
    CHECK((full.sigma_D.back() - red.sigma_D.back()).norm() < 1e-13);
    CHECK(red.records.back().J_L == 0.0);
    const double tol = integ == Integrator::rk4 ? 1e-8 : 2e-3;
    CHECK((red.sigma_D.back() - oracle::exact_evolution(h, s0, 1.5)).norm() < tol);
  }
}

TEST_CASE("wide-band closure keeps equilibrium and relaxes toward it") {
  const BiasProfile none;
  const auto D = kChain.partition().range(Region::D);
  const Mat hD = kChain.block(Region::D, Region::D);
  const Mat eq = equilibrium_density_matrix(hD, 0.0);
  const auto wb = WideBandFunctional::adjacent_sites(D.size, 0.5);
  ReducedOptions ro;
  ro.dt = 0.01;
  ro.n_steps = 500;
  const auto still = propagate_reduced(eq, kChain, none, wb, ro);
  CHECK((still.sigma_D.back() - eq).norm() < 1e-12);

  const Mat start = Mat::Identity(D.size, D.size) * 0.5;
  const auto relax = propagate_reduced(start, kChain, none, wb, ro);
  double prev = (relax.sigma_D.front() - eq).norm();
  bool monotone = true;
  for (const auto &s : relax.sigma_D) {
    const double d = (s - eq).norm();
    monotone = monotone && d <= prev + 1e-14;
    prev = d;
  }
  CHECK(monotone);
  CHECK(prev < 0.5 * (start - eq).norm());
  CHECK(functional_name(DissipationFunctional{wb}) == "wide-band");
}

TEST_CASE("wide-band rejects non-positive or non-hermitian gamma") {
  const Mat s = Mat::Identity(2, 2) * 0.5;
  Mat g = Mat::Zero(2, 2);
  g(0, 0) = -0.1;
  CHECK_THROWS_AS(wide_band_Q(s, g, s), ValidationError);
  g(0, 0) = 0.1;
  g(0, 1) = cplx(0.0, 0.05);
  CHECK_THROWS_AS(wide_band_Q(s, g, s), ValidationError);
}

TEST_CASE("coarse steps and long runs warn, strict mode escalates") {
  const Mat s0 = ground_state_density_matrix(kChain, 7);
  PropagationOptions o;
  o.dt = 0.2;
  o.n_steps = 5;
  const auto tr = propagate_full(kChain, BiasProfile{}, s0, o);
  CHECK(tr.warnings.size() == 1);
  o.dt = 0.01;
  o.n_steps = 1000;
  CHECK(recurrence_time(kChain) == doctest::Approx(6.0));
  CHECK(propagate_full(kChain, BiasProfile{}, s0, o).warnings.size() == 1);
  o.strict = true;
  CHECK_THROWS_AS(propagate_full(kChain, BiasProfile{}, s0, o), InvariantBreach);
  o.strict = false;
  o.dt = -1.0;
  CHECK_THROWS_AS(propagate_full(kChain, BiasProfile{}, s0, o), ValidationError);
  CHECK_THROWS_AS(parse_integrator("euler"), ValidationError);
}
