#include "openrdm/full_propagator.hpp"

#include "openrdm/error.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace openrdm {

const char *to_string(Integrator i) {
  return i == Integrator::rk4 ? "rk4" : "crank-nicolson";
}

Integrator parse_integrator(const std::string &s) {
  if (s == "rk4")
    return Integrator::rk4;
  if (s == "crank-nicolson" || s == "cn")
    return Integrator::crank_nicolson;
  throw ValidationError("unknown integrator '" + s + "' (expected rk4 | crank-nicolson)");
}

double recurrence_time(const TightBindingSystem &system) {
  const Partition &p = system.partition();
  const Index n_lead = std::min(p.n_L, p.n_R);
  if (n_lead == 0)
    return std::numeric_limits<double>::infinity();
  // Largest nearest-neighbour hopping inside the leads sets the group velocity.
  double hop = 0.0;
  const Mat &h = system.h0();
  for (Region r : {Region::L, Region::R}) {
    const auto a = p.range(r);
    for (Index i = a.offset; i + 1 < a.end(); ++i)
      hop = std::max(hop, std::abs(h(i, i + 1)));
  }
  if (hop == 0.0)
    return std::numeric_limits<double>::infinity();
  return static_cast<double>(n_lead) / hop;
}

double hamiltonian_norm_bound(const TightBindingSystem &system, const BiasProfile &profile) {
  Eigen::SelfAdjointEigenSolver<Mat> es(system.h0(), Eigen::EigenvaluesOnly);
  const double radius = es.eigenvalues().cwiseAbs().maxCoeff();
  return radius + std::max(std::abs(profile.amplitude_L), std::abs(profile.amplitude_R));
}

namespace {

class Diagnoser {
public:
  Diagnoser(const Mat &sigma0, Index stride) : stride_(std::max<Index>(1, stride)) {
    trace0_ = sigma0.trace().real();
    d_.initially_idempotent = idempotency_error(sigma0) < 1e-10;
  }

  void observe(Index step, const Mat &sigma) {
    const double tr = sigma.trace().real();
    const double denom = std::abs(trace0_) > 0.0 ? std::abs(trace0_) : 1.0;
    d_.max_trace_drift = std::max(d_.max_trace_drift, std::abs(tr - trace0_) / denom);
    d_.max_hermiticity = std::max(d_.max_hermiticity, hermiticity_error(sigma));
    if (d_.initially_idempotent && step % stride_ == 0)
      d_.max_idempotency = std::max(d_.max_idempotency, idempotency_error(sigma));
  }

  const TrajectoryDiagnostics &result() const { return d_; }

private:
  Index stride_;
  double trace0_ = 0.0;
  TrajectoryDiagnostics d_;
};

void record_step(DensityMatrixTrajectory &traj, Index step, double t, const Mat &sigma,
                 const Mat &h0, const Partition &p, const PropagationOptions &opts) {
  const auto L = p.range(Region::L);
  const auto D = p.range(Region::D);
  const auto R = p.range(Region::R);
  traj.times.push_back(t);
  traj.sigma_D.push_back(sigma.block(D.offset, D.offset, D.size, D.size));
  traj.block_traces.push_back({sigma.block(L.offset, L.offset, L.size, L.size).trace().real(),
                               sigma.block(D.offset, D.offset, D.size, D.size).trace().real(),
                               sigma.block(R.offset, R.offset, R.size, R.size).trace().real()});
  traj.records.push_back(make_record(t, sigma, h0, p));
  if (opts.full_stride > 0 && step % opts.full_stride == 0) {
    traj.full_steps.push_back(step);
    traj.full.push_back(sigma);
  }
}

void warn(DensityMatrixTrajectory &traj, bool strict, const std::string &msg) {
  if (strict)
    throw InvariantBreach(msg);
  traj.warnings.push_back(msg);
}

} // namespace

DensityMatrixTrajectory propagate_full(const TightBindingSystem &system, const BiasProfile &profile,
                                       const Mat &sigma0, const PropagationOptions &opts) {
  const Partition &p = system.partition();
  const Index n = system.size();
  require(opts.dt > 0.0 && std::isfinite(opts.dt), "propagation: dt must be positive");
  require(opts.n_steps >= 0, "propagation: n_steps must be non-negative");
  require(sigma0.rows() == n && sigma0.cols() == n,
          "propagation: initial density matrix has the wrong dimension");
  require(max_abs_antihermitian(sigma0) <= 1e-12 * std::max(1.0, sigma0.cwiseAbs().maxCoeff()),
          "propagation: initial density matrix is not Hermitian");
  require(!opts.record_replay || opts.integrator == Integrator::rk4,
          "propagation: replay recording needs the rk4 integrator");

  DensityMatrixTrajectory traj;
  traj.meta.mode = "full";
  traj.meta.integrator = to_string(opts.integrator);
  traj.meta.dt = opts.dt;
  traj.meta.system_fingerprint = system.fingerprint();

  const double hnorm = hamiltonian_norm_bound(system, profile);
  if (opts.dt * hnorm > 0.1) {
    std::ostringstream msg;
    msg << "dt * ||h|| = " << opts.dt * hnorm << " exceeds 0.1; the step is too coarse";
    warn(traj, opts.strict, msg.str());
  }
  const double t_rec = recurrence_time(system);
  const double t_end = opts.dt * static_cast<double>(opts.n_steps);
  if (t_end > t_rec) {
    std::ostringstream msg;
    msg << "run length " << t_end << " exceeds the lead recurrence time " << t_rec
        << "; reflections from the lead ends reach the device";
    warn(traj, opts.strict, msg.str());
  }

  const Mat &h0 = system.h0();
  const kernels::SparseHermitian hs(h0);
  const double dt = opts.dt;
  const auto D = p.range(Region::D);

  if (opts.record_replay) {
    ReplayTable table;
    table.dt = dt;
    table.n_steps = opts.n_steps;
    table.stages = 4;
    table.n_D = D.size;
    table.Q_L.reserve(static_cast<std::size_t>(opts.n_steps * 4 + 1));
    table.Q_R.reserve(static_cast<std::size_t>(opts.n_steps * 4 + 1));
    traj.replay = std::move(table);
  }
  auto record_stage = [&](const Mat &s) {
    if (traj.replay) {
      traj.replay->Q_L.push_back(compute_Q(s, h0, p, Region::L));
      traj.replay->Q_R.push_back(compute_Q(s, h0, p, Region::R));
    }
  };

  const auto reserve = static_cast<std::size_t>(opts.n_steps + 1);
  traj.times.reserve(reserve);
  traj.sigma_D.reserve(reserve);
  traj.block_traces.reserve(reserve);
  traj.records.reserve(reserve);

  Mat sigma = sigma0;
  Diagnoser diag(sigma0, opts.diagnostic_stride);
  record_step(traj, 0, 0.0, sigma, h0, p, opts);
  diag.observe(0, sigma);

  Mat k1(n, n), k2(n, n), k3(n, n), k4(n, n), stage(n, n);
  Mat cayley;
  RVec cayley_shift;

  for (Index step = 0; step < opts.n_steps; ++step) {
    const double t = dt * static_cast<double>(step);
    if (opts.integrator == Integrator::rk4) {
      const RVec s1 = profile.onsite_shift(p, t, true);
      const RVec s2 = profile.onsite_shift(p, t + 0.5 * dt);
      const RVec s4 = profile.onsite_shift(p, t + dt);
      record_stage(sigma);
      kernels::lvn_rhs(hs, s1, sigma, k1, opts.backend);
      stage = sigma + (0.5 * dt) * k1;
      record_stage(stage);
      kernels::lvn_rhs(hs, s2, stage, k2, opts.backend);
      stage = sigma + (0.5 * dt) * k2;
      record_stage(stage);
      kernels::lvn_rhs(hs, s2, stage, k3, opts.backend);
      stage = sigma + dt * k3;
      record_stage(stage);
      kernels::lvn_rhs(hs, s4, stage, k4, opts.backend);
      sigma += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    } else {
      // Cayley form of exp(-i h dt) with the midpoint hamiltonian.
      const RVec sm = profile.onsite_shift(p, t + 0.5 * dt);
      if (cayley.size() == 0 || sm != cayley_shift) {
        Mat h = h0;
        h.diagonal() += sm.cast<cplx>();
        const Mat a = Mat::Identity(n, n) + (0.5 * dt) * I * h;
        const Mat b = Mat::Identity(n, n) - (0.5 * dt) * I * h;
        cayley = a.partialPivLu().solve(b);
        cayley_shift = sm;
      }
      sigma = cayley * sigma * cayley.adjoint();
    }
    if (!sigma.allFinite())
      throw NumericalFailure("propagation diverged at step " + std::to_string(step + 1));
    record_step(traj, step + 1, dt * static_cast<double>(step + 1), sigma, h0, p, opts);
    diag.observe(step + 1, sigma);
  }
  record_stage(sigma);
  traj.diagnostics = diag.result();
  return traj;
}

double lead_occupation_sum(const DensityMatrixTrajectory &traj, Region region, Index t_index) {
  require(t_index >= 0 && t_index < static_cast<Index>(traj.block_traces.size()),
          "lead_occupation_sum: time index out of range");
  return traj.block_traces[static_cast<std::size_t>(t_index)][static_cast<int>(region)];
}

} // namespace openrdm
