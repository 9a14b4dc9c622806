#pragma once

#include "openrdm/dissipation.hpp"
#include "openrdm/kernels.hpp"
#include "openrdm/model.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace openrdm {

enum class Integrator { rk4, crank_nicolson };

const char *to_string(Integrator i);
Integrator parse_integrator(const std::string &s);

struct PropagationOptions {
  double dt = 1e-3;
  Index n_steps = 1000;
  Integrator integrator = Integrator::rk4;
  kernels::Backend backend = kernels::Backend::parallel;
  /// Turn the step-size and recurrence warnings into InvariantBreach.
  bool strict = false;
  /// Keep the stage-resolved Q_alpha needed for exact replay (rk4 only).
  bool record_replay = false;
  /// Store the full density matrix every `full_stride` steps (0: never).
  Index full_stride = 0;
  /// Evaluate the O(n^3) idempotency check every this many steps.
  Index diagnostic_stride = 1;
};

/// Q_L and Q_R at every Runge-Kutta stage of every step, plus the final time.
/// A reduced propagation on the same grid consumes these to reproduce the
/// device block of the full run.
struct ReplayTable {
  double dt = 0.0;
  Index n_steps = 0;
  Index stages = 4;
  Index n_D = 0;
  std::vector<Mat> Q_L; // n_steps * stages + 1 entries
  std::vector<Mat> Q_R;

  const Mat &q_L(Index step, Index stage) const { return Q_L[step * stages + stage]; }
  const Mat &q_R(Index step, Index stage) const { return Q_R[step * stages + stage]; }
  const Mat &final_L() const { return Q_L.back(); }
  const Mat &final_R() const { return Q_R.back(); }
};

struct TrajectoryDiagnostics {
  double max_trace_drift = 0.0; // relative to |tr sigma(0)|
  double max_hermiticity = 0.0; // ||sigma - sigma^dagger||_F
  bool initially_idempotent = false;
  double max_idempotency = 0.0; // ||sigma^2 - sigma||_F, when initially idempotent
};

struct TrajectoryMetadata {
  std::string mode = "full";
  std::string integrator;
  double dt = 0.0;
  std::string system_fingerprint;
};

/// Time series of a propagation. Device blocks, block traces and dissipation
/// records are kept for every step; full matrices only on request.
struct DensityMatrixTrajectory {
  TrajectoryMetadata meta;
  std::vector<double> times;
  std::vector<Mat> sigma_D;
  /// tr sigma_L, tr sigma_D, tr sigma_R. Lead entries are NaN for reduced runs.
  std::vector<std::array<double, 3>> block_traces;
  std::vector<DissipationRecord> records;
  std::vector<Index> full_steps;
  std::vector<Mat> full;
  std::optional<ReplayTable> replay;
  TrajectoryDiagnostics diagnostics;
  std::vector<std::string> warnings;

  Index n_steps() const { return static_cast<Index>(times.size()) - 1; }
};

/// Integrate i d(sigma)/dt = [h(t), sigma] over the whole system.
DensityMatrixTrajectory propagate_full(const TightBindingSystem &system, const BiasProfile &profile,
                                       const Mat &sigma0, const PropagationOptions &opts);

/// tr sigma_alpha at step `t_index`, i.e. the occupation summed over the
/// lead's states.
double lead_occupation_sum(const DensityMatrixTrajectory &traj, Region region, Index t_index);

/// Time for a lead-edge reflection to return to the device: the shorter lead
/// length divided by |hopping| (half the round trip at the maximal group
/// velocity 2|hopping|). Infinite when a lead is absent.
double recurrence_time(const TightBindingSystem &system);

/// Spectral radius of h0 plus the largest bias amplitude.
double hamiltonian_norm_bound(const TightBindingSystem &system, const BiasProfile &profile);

} // namespace openrdm
