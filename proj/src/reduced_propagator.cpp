#include "openrdm/reduced_propagator.hpp"

#include "openrdm/error.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace openrdm {

WideBandFunctional WideBandFunctional::adjacent_sites(Index n_D, double gamma, double mu_L,
                                                      double mu_R) {
  require(n_D >= 1, "wide-band closure needs at least one device site");
  WideBandFunctional f;
  f.gamma_L = Mat::Zero(n_D, n_D);
  f.gamma_R = Mat::Zero(n_D, n_D);
  f.gamma_L(0, 0) = gamma;
  f.gamma_R(n_D - 1, n_D - 1) = gamma;
  f.mu_L = mu_L;
  f.mu_R = mu_R;
  return f;
}

std::string functional_name(const DissipationFunctional &f) {
  struct Visitor {
    std::string operator()(const IsolatedFunctional &) const { return "none-isolated"; }
    std::string operator()(const ExactReplayFunctional &) const { return "exact-replay"; }
    std::string operator()(const WideBandFunctional &) const { return "wide-band"; }
  };
  return std::visit(Visitor{}, f);
}

namespace {

void check_broadening(const Mat &gamma, Index n_D, const char *name) {
  require(gamma.rows() == n_D && gamma.cols() == n_D,
          std::string(name) + " must be n_D x n_D");
  const double scale = std::max(1.0, gamma.cwiseAbs().maxCoeff());
  require(max_abs_antihermitian(gamma) <= 1e-12 * scale, std::string(name) + " is not Hermitian");
  Eigen::SelfAdjointEigenSolver<Mat> es(gamma, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -1e-12 * scale) {
    std::ostringstream msg;
    msg << name << " has a negative eigenvalue " << es.eigenvalues().minCoeff();
    throw ValidationError(msg.str());
  }
}

} // namespace

Mat wide_band_Q(const Mat &sigma_D, const Mat &gamma, const Mat &sigma_eq) {
  const Index n = sigma_D.rows();
  check_broadening(gamma, n, "Gamma");
  require(sigma_eq.rows() == n && sigma_eq.cols() == n, "sigma_eq dimension mismatch");
  const Mat delta = sigma_D - sigma_eq;
  return 0.5 * (gamma * delta + delta * gamma);
}

DensityMatrixTrajectory propagate_reduced(const Mat &sigma_D0, const TightBindingSystem &system,
                                          const BiasProfile &profile,
                                          const DissipationFunctional &functional,
                                          const ReducedOptions &opts) {
  const Partition &p = system.partition();
  const auto D = p.range(Region::D);
  const Index n = D.size;
  require(opts.dt > 0.0 && std::isfinite(opts.dt), "reduced propagation: dt must be positive");
  require(opts.n_steps >= 0, "reduced propagation: n_steps must be non-negative");
  require(sigma_D0.rows() == n && sigma_D0.cols() == n,
          "reduced propagation: initial sigma_D must be n_D x n_D");
  require(max_abs_antihermitian(sigma_D0) <=
              1e-12 * std::max(1.0, sigma_D0.cwiseAbs().maxCoeff()),
          "reduced propagation: initial sigma_D is not Hermitian");

  const auto *replay = std::get_if<ExactReplayFunctional>(&functional);
  const auto *wide = std::get_if<WideBandFunctional>(&functional);
  const bool isolated = std::holds_alternative<IsolatedFunctional>(functional);
  require(opts.integrator == Integrator::rk4 || isolated,
          "reduced propagation: crank-nicolson is only available for the isolated closure");

  if (replay) {
    require(replay->table != nullptr, "exact-replay closure has no replay table");
    const ReplayTable &tb = *replay->table;
    const bool dt_match = std::abs(tb.dt - opts.dt) <= 1e-12 * opts.dt;
    if (!dt_match || tb.n_steps != opts.n_steps || tb.stages != 4 || tb.n_D != n) {
      std::ostringstream msg;
      msg << "replay grid mismatch: table has dt=" << tb.dt << ", n_steps=" << tb.n_steps
          << ", n_D=" << tb.n_D << "; run requests dt=" << opts.dt << ", n_steps=" << opts.n_steps
          << ", n_D=" << n;
      throw ValidationError(msg.str());
    }
    require(tb.Q_L.size() == static_cast<std::size_t>(tb.n_steps * 4 + 1) &&
                tb.Q_R.size() == tb.Q_L.size(),
            "replay table is truncated");
  }
  if (wide) {
    check_broadening(wide->gamma_L, n, "Gamma_L");
    check_broadening(wide->gamma_R, n, "Gamma_R");
    require(wide->eq_refresh >= 1, "wide-band eq_refresh must be >= 1");
  }

  DensityMatrixTrajectory traj;
  traj.meta.mode = functional_name(functional);
  traj.meta.integrator = to_string(opts.integrator);
  traj.meta.dt = opts.dt;
  traj.meta.system_fingerprint = system.fingerprint();

  const Mat hD = system.block(Region::D, Region::D);
  const kernels::SparseHermitian hs(hD);
  const double dt = opts.dt;
  auto device_shift = [&](double t, bool right) -> RVec {
    return profile.onsite_shift(p, t, right).segment(D.offset, D.size);
  };

  Mat eq_L, eq_R;
  auto refresh_eq = [&](double t) {
    Mat h = hD;
    h.diagonal() += device_shift(t, true).cast<cplx>();
    eq_L = equilibrium_density_matrix(h, wide->mu_L);
    eq_R = equilibrium_density_matrix(h, wide->mu_R);
  };

  // Q_L, Q_R for the given state; `slot` indexes the replay table.
  auto closure = [&](const Mat &s, Index slot, Mat &qL, Mat &qR) {
    if (replay) {
      qL = replay->table->Q_L[static_cast<std::size_t>(slot)];
      qR = replay->table->Q_R[static_cast<std::size_t>(slot)];
    } else if (wide) {
      qL = 0.5 * (wide->gamma_L * (s - eq_L) + (s - eq_L) * wide->gamma_L);
      qR = 0.5 * (wide->gamma_R * (s - eq_R) + (s - eq_R) * wide->gamma_R);
    } else {
      qL = Mat::Zero(n, n);
      qR = Mat::Zero(n, n);
    }
  };

  auto record = [&](double t, const Mat &s, const Mat &qL, const Mat &qR) {
    traj.times.push_back(t);
    traj.sigma_D.push_back(s);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    traj.block_traces.push_back({nan, s.trace().real(), nan});
    DissipationRecord r;
    r.t = t;
    r.Q_L = qL;
    r.Q_R = qR;
    r.J_L = current(qL);
    r.J_R = current(qR);
    r.tr_sigma_D = s.trace().real();
    traj.records.push_back(std::move(r));
    traj.diagnostics.max_hermiticity =
        std::max(traj.diagnostics.max_hermiticity, hermiticity_error(s));
  };

  const auto reserve = static_cast<std::size_t>(opts.n_steps + 1);
  traj.times.reserve(reserve);
  traj.sigma_D.reserve(reserve);
  traj.block_traces.reserve(reserve);
  traj.records.reserve(reserve);

  Mat sigma = sigma_D0;
  Mat k1(n, n), k2(n, n), k3(n, n), k4(n, n), stage(n, n), qL, qR;
  Mat cayley;
  RVec cayley_shift;

  auto rhs = [&](const RVec &shift, const Mat &s, Index slot, Mat &out) {
    kernels::lvn_rhs(hs, shift, s, out, opts.backend);
    if (!isolated) {
      closure(s, slot, qL, qR);
      out -= qL + qR;
    }
  };

  for (Index step = 0; step < opts.n_steps; ++step) {
    const double t = dt * static_cast<double>(step);
    if (wide && step % wide->eq_refresh == 0)
      refresh_eq(t);
    closure(sigma, step * 4, qL, qR);
    record(t, sigma, qL, qR);

    if (opts.integrator == Integrator::rk4) {
      const RVec s1 = device_shift(t, true);
      const RVec s2 = device_shift(t + 0.5 * dt, false);
      const RVec s4 = device_shift(t + dt, false);
      rhs(s1, sigma, step * 4 + 0, k1);
      stage = sigma + (0.5 * dt) * k1;
      rhs(s2, stage, step * 4 + 1, k2);
      stage = sigma + (0.5 * dt) * k2;
      rhs(s2, stage, step * 4 + 2, k3);
      stage = sigma + dt * k3;
      rhs(s4, stage, step * 4 + 3, k4);
      sigma += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    } else {
      const RVec sm = device_shift(t + 0.5 * dt, false);
      if (cayley.size() == 0 || sm != cayley_shift) {
        Mat h = hD;
        h.diagonal() += sm.cast<cplx>();
        const Mat a = Mat::Identity(n, n) + (0.5 * dt) * I * h;
        const Mat b = Mat::Identity(n, n) - (0.5 * dt) * I * h;
        cayley = a.partialPivLu().solve(b);
        cayley_shift = sm;
      }
      sigma = cayley * sigma * cayley.adjoint();
    }
    if (!sigma.allFinite())
      throw NumericalFailure("reduced propagation diverged at step " + std::to_string(step + 1));
  }
  const double t_end = dt * static_cast<double>(opts.n_steps);
  if (wide && opts.n_steps % wide->eq_refresh == 0)
    refresh_eq(t_end);
  closure(sigma, opts.n_steps * 4, qL, qR);
  record(t_end, sigma, qL, qR);
  return traj;
}

} // namespace openrdm
